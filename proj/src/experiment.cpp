#include "stcl/experiment.hpp"

#include "stcl/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numbers>

namespace stcl {

DataSplit split_series(const DemandSeries& series, std::size_t min_history, std::size_t test_days,
                       std::size_t first_target) {
    DataSplit s;
    s.test = test_targets(series, test_days);
    s.train_end = s.test.empty() ? series.size() : s.test.front();
    const std::size_t first = std::max(min_history, first_target);
    if (s.train_end <= first) {
        throw DataError("no training targets: they would start at bucket " + std::to_string(first) +
                        " but the training period has " + std::to_string(s.train_end));
    }
    for (std::size_t t = first; t < s.train_end; ++t) s.train.push_back(t);
    if (!s.test.empty() && s.test.front() < min_history)
        throw DataError("test period starts before the model has enough history");
    return s;
}

FitResult fit_model(const RunConfig& cfg, const DemandSeries& series,
                    const std::function<void(const EpochRecord&)>& on_epoch) {
    FitResult r;
    r.model = make_model(cfg, series.rows(), series.cols());
    r.split = split_series(series, r.model->min_history(), cfg.eval.test_days, cfg.train.first_target);
    r.model->fit_scale(series, r.split.train_end);
    Rng rng = training_rng(cfg);
    const auto start = std::chrono::steady_clock::now();
    r.history = train(*r.model, series, r.split.train, cfg.train, rng, on_epoch);
    r.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

std::optional<std::pair<std::size_t, std::size_t>> grid_for_area(const GridSpec& box, double area_km2) {
    if (!(area_km2 > 0)) return std::nullopt;
    constexpr double km_per_degree = 111.195;
    const double mid = (box.lat_min + box.lat_max) / 2.0 * std::numbers::pi / 180.0;
    const double height = (box.lat_max - box.lat_min) * km_per_degree;
    const double width = (box.lng_max - box.lng_min) * km_per_degree * std::cos(mid);
    const double side = std::sqrt(area_km2);
    const double r = height / side, c = width / side;
    const double rr = std::round(r), rc = std::round(c);
    if (rr < 1 || rc < 1 || std::abs(r - rr) > 0.05 || std::abs(c - rc) > 0.05) return std::nullopt;
    return std::pair{static_cast<std::size_t>(rr), static_cast<std::size_t>(rc)};
}

std::vector<SweepRow> partition_sweep(std::span<const OrderRecord> orders, const RunConfig& cfg,
                                      std::span<const double> areas_km2, std::span<const int> hours) {
    RunConfig fixed = cfg;
    fixed.train.patience = 0;
    fixed.train.val_fraction = 0.0;
    fixed.train.restore_best = false;

    std::int64_t t_start = 0, t_end = 0;
    if (cfg.ingest.t_start && cfg.ingest.t_end) {
        t_start = *cfg.ingest.t_start;
        t_end = *cfg.ingest.t_end;
    } else {
        std::tie(t_start, t_end) = covering_window(orders, cfg.ingest.bucket_seconds);
        if (cfg.ingest.t_start) t_start = *cfg.ingest.t_start;
        if (cfg.ingest.t_end) t_end = *cfg.ingest.t_end;
    }

    std::vector<SweepRow> out;
    for (double area : areas_km2) {
        const auto dims = grid_for_area(cfg.grid, area);
        if (!dims) {
            std::cerr << "warning: cell area " << area << " km2 does not tile the grid box; skipped\n";
            continue;
        }
        GridSpec grid = cfg.grid;
        grid.rows = dims->first;
        grid.cols = dims->second;
        const BinningResult binned = bin_orders(orders, grid, cfg.ingest.bucket_seconds, t_start, t_end);
        const FitResult fit = fit_model(fixed, binned.series);
        const auto table = evaluate_at_hours(*fit.model, binned.series, fit.split.test, hours, true);
        for (const HourlyMetrics& row : table)
            out.push_back({area, grid.rows, grid.cols, row.hour, row.report.rmse, fit.train_seconds});
    }
    return out;
}

void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out) {
    out << "area_km2,grid_rows,hour,rmse,train_seconds\n";
    char buf[160];
    for (const SweepRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6g,%zu,%s,%.9g,%.3f\n", r.area_km2, r.rows,
                      r.hour ? std::to_string(*r.hour).c_str() : "all", r.rmse, r.train_seconds);
        out << buf;
    }
}

}  // namespace stcl
