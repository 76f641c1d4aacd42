#pragma once

#include "stcl/tensor.hpp"

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace stcl {

// Geographic bounding box split into rows x cols equal lat/lng rectangles.
// Row index comes from latitude (row 0 at lat_min), column index from longitude.
struct GridSpec {
    double lat_min = 0.0;
    double lat_max = 1.0;
    double lng_min = 0.0;
    double lng_max = 1.0;
    std::size_t rows = 1;
    std::size_t cols = 1;

    // Throws std::invalid_argument on an empty box or zero partitions.
    void validate() const;

    double lat_step() const { return (lat_max - lat_min) / static_cast<double>(rows); }
    double lng_step() const { return (lng_max - lng_min) / static_cast<double>(cols); }

    // Placeholder box [0, rows] x [0, cols], used when only dimensions are known.
    static GridSpec unit(std::size_t rows, std::size_t cols);

    bool operator==(const GridSpec&) const = default;
};

struct CellIndex {
    std::size_t row = 0;
    std::size_t col = 0;
    auto operator<=>(const CellIndex&) const = default;
};

struct CellBounds {
    double lat_lo, lat_hi, lng_lo, lng_hi;
};

// Cell containing (lat, lng), or nullopt outside the closed box. Points on
// lat_max / lng_max clamp into the last row / column.
std::optional<CellIndex> locate(const GridSpec& spec, double lat, double lng);

CellBounds cell_bounds(const GridSpec& spec, CellIndex cell);

// One time bucket of demand: counts is a [rows, cols] tensor of nonnegative reals.
struct DemandSnapshot {
    GridSpec grid;
    Tensor counts;
    std::size_t time_index = 0;

    DemandSnapshot(GridSpec grid, Tensor counts, std::size_t time_index);
};

double total_demand(const DemandSnapshot& snapshot);

// Contiguous sequence of snapshots over uniform buckets. Snapshot k covers
// [t0 + k * bucket_seconds, t0 + (k + 1) * bucket_seconds).
class DemandSeries {
public:
    DemandSeries(GridSpec grid, std::int64_t bucket_seconds, std::int64_t t0,
                 std::vector<Tensor> counts);

    const GridSpec& grid() const { return grid_; }
    std::size_t size() const { return counts_.size(); }
    bool empty() const { return counts_.empty(); }
    std::size_t rows() const { return grid_.rows; }
    std::size_t cols() const { return grid_.cols; }
    std::int64_t bucket_seconds() const { return bucket_seconds_; }
    std::int64_t t0() const { return t0_; }
    std::int64_t time_of(std::size_t k) const {
        return t0_ + static_cast<std::int64_t>(k) * bucket_seconds_;
    }

    const Tensor& counts(std::size_t k) const { return counts_.at(k); }
    const std::vector<Tensor>& all_counts() const { return counts_; }
    DemandSnapshot snapshot(std::size_t k) const { return {grid_, counts_.at(k), k}; }

    // Snapshots [begin, end) as a new series starting at time_of(begin).
    DemandSeries slice(std::size_t begin, std::size_t end) const;

    // Largest cell value over snapshots [begin, end).
    double max_value(std::size_t begin, std::size_t end) const;

    bool operator==(const DemandSeries&) const = default;

private:
    GridSpec grid_;
    std::int64_t bucket_seconds_;
    std::int64_t t0_;
    std::vector<Tensor> counts_;
};

// Sum factor x factor blocks. factor must divide both dimensions; the coarse
// grid keeps the same bounding box.
DemandSnapshot coarsen(const DemandSnapshot& snapshot, std::size_t factor);
DemandSeries coarsen(const DemandSeries& series, std::size_t factor);

// Snapshot-stream text format: a header line "M N T bucket_seconds t0" followed
// by T blocks of M lines holding N space-separated values. Values are written
// with 6 significant digits, so reading a written stream and writing it again
// reproduces the same bytes.
void write_snapshot_stream(const DemandSeries& series, std::ostream& out);
void write_snapshot_stream(const DemandSeries& series, const std::filesystem::path& path);

// The stream header carries no geographic bounds; pass `grid` to attach a
// known box (its dimensions must match) or get GridSpec::unit.
DemandSeries read_snapshot_stream(std::istream& in, std::optional<GridSpec> grid = std::nullopt);
DemandSeries read_snapshot_stream(const std::filesystem::path& path,
                                  std::optional<GridSpec> grid = std::nullopt);

}  // namespace stcl
