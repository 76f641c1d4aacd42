#pragma once

#include "stcl/forecaster.hpp"
#include "stcl/grid.hpp"
#include "stcl/tensor.hpp"

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stcl {

// Error metrics over the u cells of one snapshot pair. MAPE skips cells whose
// true value is zero and is undefined (nullopt) when every cell is zero.
struct MetricReport {
    double rmse = 0.0;
    double mae = 0.0;
    std::optional<double> mape;
    std::size_t u = 0;
    std::size_t skipped_zero_cells = 0;
};

double rmse(const Tensor& truth, const Tensor& prediction);
double mae(const Tensor& truth, const Tensor& prediction);
std::optional<double> mape(const Tensor& truth, const Tensor& prediction,
                           std::size_t* skipped = nullptr);
MetricReport compute_metrics(const Tensor& truth, const Tensor& prediction);

// Mean of per-snapshot reports. u and skipped_zero_cells are totals; MAPE
// averages over the snapshots where it is defined.
MetricReport average_reports(std::span<const MetricReport> reports);

// Hour of day (UTC) at which bucket k starts.
int hour_of_day(const DemandSeries& series, std::size_t k);

// Last `test_days` days of buckets, as target indices.
std::vector<std::size_t> test_targets(const DemandSeries& series, std::size_t test_days);

struct HourlyMetrics {
    std::optional<int> hour;  // nullopt: every test target
    std::size_t targets = 0;
    MetricReport report;
};

// Metrics averaged over the test targets falling at each requested hour.
// Hours with no target are skipped with a warning. With `include_overall`, a
// final row averages over every test target.
std::vector<HourlyMetrics> evaluate_at_hours(const Forecaster& model, const DemandSeries& series,
                                             std::span<const std::size_t> targets,
                                             std::span<const int> hours, bool include_overall = true);

struct ModelMetrics {
    std::string model;
    std::vector<HourlyMetrics> rows;
};

// Columns: model,hour,rmse,mae,mape,u,skipped. The overall row has hour "all"
// and an undefined MAPE is written as "NA".
void write_metrics_csv(std::span<const ModelMetrics> results, std::ostream& out);

// Plain (P2) portable graymap, rows in matrix order, pixel =
// floor(255 * v / max + 0.5); an all-zero snapshot is all black.
void export_heatmap(const DemandSnapshot& snapshot, const std::filesystem::path& path);
void export_heatmap(const DemandSnapshot& snapshot, std::ostream& out);
std::vector<std::vector<int>> read_graymap(std::istream& in);

// "time_index,value" lines after a header, one per bucket. Without a cell the
// city-wide total is written.
void export_series(const DemandSeries& series, std::optional<CellIndex> cell, std::ostream& out);
void export_series(const DemandSeries& series, std::optional<CellIndex> cell,
                   const std::filesystem::path& path);

}  // namespace stcl
