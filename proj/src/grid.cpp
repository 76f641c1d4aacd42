#include "stcl/grid.hpp"

#include "stcl/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace stcl {

void GridSpec::validate() const {
    if (!(lat_min < lat_max)) throw std::invalid_argument("grid: lat_min must be below lat_max");
    if (!(lng_min < lng_max)) throw std::invalid_argument("grid: lng_min must be below lng_max");
    if (rows == 0 || cols == 0) throw std::invalid_argument("grid: rows and cols must be >= 1");
}

GridSpec GridSpec::unit(std::size_t rows, std::size_t cols) {
    return GridSpec{0.0, static_cast<double>(rows), 0.0, static_cast<double>(cols), rows, cols};
}

namespace {

std::optional<std::size_t> bin(double v, double lo, double hi, double step, std::size_t n) {
    if (!(v >= lo && v <= hi)) return std::nullopt;  // also rejects NaN
    auto i = static_cast<std::size_t>(std::floor((v - lo) / step));
    return i >= n ? n - 1 : i;
}

}  // namespace

std::optional<CellIndex> locate(const GridSpec& spec, double lat, double lng) {
    auto r = bin(lat, spec.lat_min, spec.lat_max, spec.lat_step(), spec.rows);
    auto c = bin(lng, spec.lng_min, spec.lng_max, spec.lng_step(), spec.cols);
    if (!r || !c) return std::nullopt;
    return CellIndex{*r, *c};
}

CellBounds cell_bounds(const GridSpec& spec, CellIndex cell) {
    const double dr = spec.lat_step(), dc = spec.lng_step();
    return {spec.lat_min + dr * static_cast<double>(cell.row),
            spec.lat_min + dr * static_cast<double>(cell.row + 1),
            spec.lng_min + dc * static_cast<double>(cell.col),
            spec.lng_min + dc * static_cast<double>(cell.col + 1)};
}

DemandSnapshot::DemandSnapshot(GridSpec g, Tensor c, std::size_t k)
    : grid(g), counts(std::move(c)), time_index(k) {
    if (counts.shape() != Shape{grid.rows, grid.cols}) {
        throw ShapeError("snapshot counts " + shape_string(counts.shape()) +
                         " do not match grid " + shape_string({grid.rows, grid.cols}));
    }
    for (double v : counts.values()) {
        if (!(v >= 0.0)) throw DataError("snapshot counts must be nonnegative");
    }
}

double total_demand(const DemandSnapshot& snapshot) { return snapshot.counts.sum(); }

DemandSeries::DemandSeries(GridSpec grid, std::int64_t bucket_seconds, std::int64_t t0,
                           std::vector<Tensor> counts)
    : grid_(grid), bucket_seconds_(bucket_seconds), t0_(t0), counts_(std::move(counts)) {
    grid_.validate();
    if (bucket_seconds_ <= 0) throw std::invalid_argument("series: bucket duration must be > 0");
    const Shape expected{grid_.rows, grid_.cols};
    for (const auto& c : counts_) {
        if (c.shape() != expected) {
            throw ShapeError("series snapshot " + shape_string(c.shape()) +
                             " does not match grid " + shape_string(expected));
        }
        for (double v : c.values()) {
            if (!(v >= 0.0)) throw DataError("series counts must be nonnegative and finite");
        }
    }
}

DemandSeries DemandSeries::slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > counts_.size()) throw std::out_of_range("series slice out of range");
    return DemandSeries(grid_, bucket_seconds_, time_of(begin),
                        std::vector<Tensor>(counts_.begin() + static_cast<std::ptrdiff_t>(begin),
                                            counts_.begin() + static_cast<std::ptrdiff_t>(end)));
}

double DemandSeries::max_value(std::size_t begin, std::size_t end) const {
    double m = 0.0;
    for (std::size_t k = begin; k < end && k < counts_.size(); ++k) {
        for (double v : counts_[k].values()) m = std::max(m, v);
    }
    return m;
}

namespace {

Tensor coarsen_counts(const Tensor& counts, std::size_t rows, std::size_t cols,
                      std::size_t factor) {
    Tensor out(Shape{rows / factor, cols / factor});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out[(r / factor) * (cols / factor) + c / factor] += counts[r * cols + c];
        }
    }
    return out;
}

GridSpec coarse_grid(const GridSpec& g, std::size_t factor) {
    if (factor == 0 || g.rows % factor != 0 || g.cols % factor != 0) {
        throw std::invalid_argument("coarsen: factor " + std::to_string(factor) +
                                    " does not divide grid " + std::to_string(g.rows) + "x" +
                                    std::to_string(g.cols));
    }
    GridSpec out = g;
    out.rows /= factor;
    out.cols /= factor;
    return out;
}

}  // namespace

DemandSnapshot coarsen(const DemandSnapshot& snapshot, std::size_t factor) {
    const GridSpec g = coarse_grid(snapshot.grid, factor);
    return {g, coarsen_counts(snapshot.counts, snapshot.grid.rows, snapshot.grid.cols, factor),
            snapshot.time_index};
}

DemandSeries coarsen(const DemandSeries& series, std::size_t factor) {
    const GridSpec g = coarse_grid(series.grid(), factor);
    std::vector<Tensor> out;
    out.reserve(series.size());
    for (const auto& c : series.all_counts()) {
        out.push_back(coarsen_counts(c, series.rows(), series.cols(), factor));
    }
    return {g, series.bucket_seconds(), series.t0(), std::move(out)};
}

void write_snapshot_stream(const DemandSeries& series, std::ostream& out) {
    out << series.rows() << ' ' << series.cols() << ' ' << series.size() << ' '
        << series.bucket_seconds() << ' ' << series.t0() << '\n';
    char buf[32];
    for (const auto& counts : series.all_counts()) {
        for (std::size_t r = 0; r < series.rows(); ++r) {
            for (std::size_t c = 0; c < series.cols(); ++c) {
                std::snprintf(buf, sizeof buf, "%.6g", counts[r * series.cols() + c]);
                if (c) out << ' ';
                out << buf;
            }
            out << '\n';
        }
    }
}

void write_snapshot_stream(const DemandSeries& series, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write snapshot stream: " + path.string());
    write_snapshot_stream(series, out);
    if (!out) throw DataError("failed writing snapshot stream: " + path.string());
}

DemandSeries read_snapshot_stream(std::istream& in, std::optional<GridSpec> grid) {
    std::size_t rows = 0, cols = 0, count = 0;
    std::int64_t bucket = 0, t0 = 0;
    if (!(in >> rows >> cols >> count >> bucket >> t0)) {
        throw DataError("snapshot stream: malformed header (expected 'M N T bucket_duration t0')");
    }
    if (rows == 0 || cols == 0) throw DataError("snapshot stream: empty grid in header");
    if (grid && (grid->rows != rows || grid->cols != cols)) {
        throw DataError("snapshot stream grid " + std::to_string(rows) + "x" +
                        std::to_string(cols) + " does not match configured grid " +
                        std::to_string(grid->rows) + "x" + std::to_string(grid->cols));
    }
    std::vector<Tensor> snaps;
    snaps.reserve(count);
    std::string tok;
    for (std::size_t k = 0; k < count; ++k) {
        Tensor t(Shape{rows, cols});
        for (std::size_t i = 0; i < rows * cols; ++i) {
            if (!(in >> tok)) {
                throw DataError("snapshot stream truncated in block " + std::to_string(k));
            }
            char* end = nullptr;
            t[i] = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0') {
                throw DataError("snapshot stream: bad value '" + tok + "' in block " +
                                std::to_string(k));
            }
        }
        snaps.push_back(std::move(t));
    }
    return DemandSeries(grid.value_or(GridSpec::unit(rows, cols)), bucket, t0, std::move(snaps));
}

DemandSeries read_snapshot_stream(const std::filesystem::path& path, std::optional<GridSpec> grid) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read snapshot stream: " + path.string());
    return read_snapshot_stream(in, grid);
}

}  // namespace stcl
