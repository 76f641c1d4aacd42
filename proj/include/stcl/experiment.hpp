#pragma once

#include "stcl/config.hpp"
#include "stcl/eval.hpp"
#include "stcl/ingest.hpp"
#include "stcl/models.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace stcl {

// Training targets run from the model's history depth up to the test period;
// the test period is the last `test_days` days.
struct DataSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::size_t train_end = 0;  // first test bucket
};

// Training targets start at max(min_history, first_target).
DataSplit split_series(const DemandSeries& series, std::size_t min_history, std::size_t test_days,
                       std::size_t first_target = 0);

struct FitResult {
    std::unique_ptr<TrainableForecaster> model;
    TrainHistory history;
    DataSplit split;
    double train_seconds = 0.0;
};

// Builds cfg.model, fits its data scale on the training period and trains it
// with the run seed.
FitResult fit_model(const RunConfig& cfg, const DemandSeries& series,
                    const std::function<void(const EpochRecord&)>& on_epoch = {});

// Rows x cols of square cells of the given area covering the config box
// (111.195 km per degree of latitude, longitude scaled by the cosine of the
// mid latitude), or nullopt if either count is not within 0.05 of an integer.
std::optional<std::pair<std::size_t, std::size_t>> grid_for_area(const GridSpec& box, double area_km2);

struct SweepRow {
    double area_km2 = 0.0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::optional<int> hour;  // nullopt: all test targets
    double rmse = 0.0;
    double train_seconds = 0.0;
};

// Re-bins the orders at each cell area, trains for the configured number of
// epochs without early stopping, and evaluates RMSE at the given hours.
// Areas that do not tile the box are skipped with a warning.
std::vector<SweepRow> partition_sweep(std::span<const OrderRecord> orders, const RunConfig& cfg,
                                      std::span<const double> areas_km2, std::span<const int> hours);

// Columns: area_km2,grid_rows,hour,rmse,train_seconds.
void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out);

}  // namespace stcl
