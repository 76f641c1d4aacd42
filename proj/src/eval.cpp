#include "stcl/eval.hpp"

#include "stcl/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace stcl {

double rmse(const Tensor& truth, const Tensor& prediction) {
    require_same_shape(truth, prediction, "rmse");
    if (truth.size() == 0) throw DataError("rmse over zero cells");
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = truth[i] - prediction[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(truth.size()));
}

double mae(const Tensor& truth, const Tensor& prediction) {
    require_same_shape(truth, prediction, "mae");
    if (truth.size() == 0) throw DataError("mae over zero cells");
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) s += std::abs(truth[i] - prediction[i]);
    return s / static_cast<double>(truth.size());
}

std::optional<double> mape(const Tensor& truth, const Tensor& prediction, std::size_t* skipped) {
    require_same_shape(truth, prediction, "mape");
    double s = 0.0;
    std::size_t used = 0, zero = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == 0.0) {
            ++zero;
            continue;
        }
        s += std::abs((truth[i] - prediction[i]) / truth[i]);
        ++used;
    }
    if (skipped) *skipped = zero;
    if (used == 0) return std::nullopt;
    return 100.0 * s / static_cast<double>(used);
}

MetricReport compute_metrics(const Tensor& truth, const Tensor& prediction) {
    MetricReport r;
    r.rmse = rmse(truth, prediction);
    r.mae = mae(truth, prediction);
    r.mape = mape(truth, prediction, &r.skipped_zero_cells);
    r.u = truth.size();
    return r;
}

MetricReport average_reports(std::span<const MetricReport> reports) {
    MetricReport out;
    if (reports.empty()) return out;
    double mape_sum = 0.0;
    std::size_t mape_n = 0;
    for (const MetricReport& r : reports) {
        out.rmse += r.rmse;
        out.mae += r.mae;
        out.u += r.u;
        out.skipped_zero_cells += r.skipped_zero_cells;
        if (r.mape) {
            mape_sum += *r.mape;
            ++mape_n;
        }
    }
    const auto n = static_cast<double>(reports.size());
    out.rmse /= n;
    out.mae /= n;
    if (mape_n > 0) out.mape = mape_sum / static_cast<double>(mape_n);
    return out;
}

int hour_of_day(const DemandSeries& series, std::size_t k) {
    const std::int64_t t = series.time_of(k);
    const std::int64_t sec = ((t % 86400) + 86400) % 86400;
    return static_cast<int>(sec / 3600);
}

std::vector<std::size_t> test_targets(const DemandSeries& series, std::size_t test_days) {
    const auto per_day = static_cast<std::size_t>(86400 / series.bucket_seconds());
    const std::size_t n = test_days * std::max<std::size_t>(per_day, 1);
    if (n > series.size())
        throw DataError("series of " + std::to_string(series.size()) + " buckets is shorter than " +
                        std::to_string(test_days) + " test days");
    std::vector<std::size_t> out;
    for (std::size_t k = series.size() - n; k < series.size(); ++k) out.push_back(k);
    return out;
}

std::vector<HourlyMetrics> evaluate_at_hours(const Forecaster& model, const DemandSeries& series,
                                             std::span<const std::size_t> targets,
                                             std::span<const int> hours, bool include_overall) {
    model.check_compatible(series);
    const std::vector<Tensor> preds = model.predict(series, targets);
    std::vector<MetricReport> reports;
    reports.reserve(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i)
        reports.push_back(compute_metrics(series.counts(targets[i]), preds[i]));

    std::vector<HourlyMetrics> out;
    for (int hour : hours) {
        std::vector<MetricReport> at;
        for (std::size_t i = 0; i < targets.size(); ++i)
            if (hour_of_day(series, targets[i]) == hour) at.push_back(reports[i]);
        if (at.empty()) {
            std::cerr << "warning: no test target at hour " << hour << "; skipped\n";
            continue;
        }
        out.push_back({hour, at.size(), average_reports(at)});
    }
    if (include_overall && !reports.empty())
        out.push_back({std::nullopt, reports.size(), average_reports(reports)});
    return out;
}

namespace {
std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}
}  // namespace

void write_metrics_csv(std::span<const ModelMetrics> results, std::ostream& out) {
    out << "model,hour,rmse,mae,mape,u,skipped\n";
    for (const ModelMetrics& m : results) {
        for (const HourlyMetrics& row : m.rows) {
            out << m.model << ',' << (row.hour ? std::to_string(*row.hour) : "all") << ','
                << fmt(row.report.rmse) << ',' << fmt(row.report.mae) << ','
                << (row.report.mape ? fmt(*row.report.mape) : "NA") << ',' << row.report.u << ','
                << row.report.skipped_zero_cells << '\n';
        }
    }
}

void export_heatmap(const DemandSnapshot& snapshot, std::ostream& out) {
    const Tensor& c = snapshot.counts;
    const std::size_t rows = c.dim(0), cols = c.dim(1);
    double mx = 0.0;
    for (double v : c.values()) mx = std::max(mx, v);
    out << "P2\n" << cols << ' ' << rows << "\n255\n";
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < cols; ++k) {
            const double v = c[r * cols + k];
            const int px = mx > 0.0 ? static_cast<int>(std::floor(255.0 * v / mx + 0.5)) : 0;
            out << (k ? " " : "") << px;
        }
        out << '\n';
    }
}

void export_heatmap(const DemandSnapshot& snapshot, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write heatmap " + path.string());
    export_heatmap(snapshot, out);
    if (!out) throw DataError("failed writing heatmap " + path.string());
}

std::vector<std::vector<int>> read_graymap(std::istream& in) {
    std::string magic;
    std::size_t w = 0, h = 0;
    int maxval = 0;
    if (!(in >> magic >> w >> h >> maxval) || magic != "P2")
        throw DataError("not a plain graymap");
    std::vector<std::vector<int>> px(h, std::vector<int>(w));
    for (auto& row : px)
        for (int& v : row)
            if (!(in >> v) || v < 0 || v > maxval) throw DataError("bad graymap pixel");
    return px;
}

void export_series(const DemandSeries& series, std::optional<CellIndex> cell, std::ostream& out) {
    if (cell && (cell->row >= series.rows() || cell->col >= series.cols()))
        throw DataError("cell outside the grid");
    out << "time_index,value\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const Tensor& c = series.counts(k);
        const double v = cell ? c[cell->row * series.cols() + cell->col] : c.sum();
        out << k << ',' << fmt(v) << '\n';
    }
}

void export_series(const DemandSeries& series, std::optional<CellIndex> cell,
                   const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write series " + path.string());
    export_series(series, cell, out);
}

}  // namespace stcl
