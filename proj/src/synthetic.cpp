#include "stcl/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace stcl {

void SyntheticSpec::validate() const {
    grid.validate();
    if (buckets == 0) throw std::invalid_argument("synthetic series needs at least one bucket");
    if (bucket_seconds <= 0) throw std::invalid_argument("bucket length must be positive");
    if (daily < 0 || weekly < 0) throw std::invalid_argument("amplitudes must be nonnegative");
    if (noise_sigma < 0) throw std::invalid_argument("noise sigma must be nonnegative");
    if (hotspot_width <= 0) throw std::invalid_argument("hotspot width must be positive");
    for (const Hotspot& h : hotspots)
        if (h.amplitude < 0) throw std::invalid_argument("hotspot amplitude must be nonnegative");
}

DemandSeries generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t M = spec.grid.rows, N = spec.grid.cols;
    const double cr = (static_cast<double>(M) - 1.0) / 2.0, cc = (static_cast<double>(N) - 1.0) / 2.0;
    const double far = std::max(std::hypot(cr, cc), 1e-12);

    Tensor phase(Shape{M, N}), offset(Shape{M, N});
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t n = 0; n < N; ++n) {
            const double dr = static_cast<double>(m) - cr, dc = static_cast<double>(n) - cc;
            phase[m * N + n] = spec.phase_spread * std::hypot(dr, dc) / far;
            double h = 0.0;
            for (const Hotspot& s : spec.hotspots) {
                const double d2 = std::pow(static_cast<double>(m) - s.row, 2) +
                                  std::pow(static_cast<double>(n) - s.col, 2);
                h += s.amplitude * std::exp(-d2 / (2.0 * spec.hotspot_width * spec.hotspot_width));
            }
            offset[m * N + n] = h;
        }
    }

    Rng rng(spec.seed);
    const double two_pi = 2.0 * std::numbers::pi;
    std::vector<Tensor> counts;
    counts.reserve(spec.buckets);
    for (std::size_t k = 0; k < spec.buckets; ++k) {
        // Hours since t0, so the cycles stay daily/weekly for any bucket length.
        const double hour = static_cast<double>(k) * static_cast<double>(spec.bucket_seconds) / 3600.0;
        const double week = spec.weekly * std::sin(two_pi * hour / 168.0);
        Tensor snap(Shape{M, N});
        for (std::size_t i = 0; i < M * N; ++i) {
            double v = spec.base + spec.daily * std::sin(two_pi * hour / 24.0 + phase[i]) + week + offset[i];
            if (spec.noise_sigma > 0) v += spec.noise_sigma * rng.normal();
            snap[i] = std::max(0.0, v);
        }
        counts.push_back(std::move(snap));
    }
    return DemandSeries(spec.grid, spec.bucket_seconds, spec.t0, std::move(counts));
}

std::vector<OrderRecord> synthesize_orders(const DemandSeries& series, std::uint64_t seed) {
    Rng rng(seed);
    const GridSpec& g = series.grid();
    std::vector<OrderRecord> out;
    std::size_t id = 0;
    for (std::size_t k = 0; k < series.size(); ++k) {
        const double t_lo = static_cast<double>(series.time_of(k));
        const Tensor& c = series.counts(k);
        for (std::size_t m = 0; m < g.rows; ++m) {
            for (std::size_t n = 0; n < g.cols; ++n) {
                const auto count = static_cast<std::size_t>(std::floor(c[m * g.cols + n] + 0.5));
                const CellBounds b = cell_bounds(g, {m, n});
                for (std::size_t j = 0; j < count; ++j) {
                    // Whole seconds keep the text form exact; stay clear of cell
                    // edges so rounding in the written coordinates cannot move
                    // an order into a neighbour.
                    const double t = t_lo + std::floor(rng.uniform() * static_cast<double>(series.bucket_seconds()));
                    const double lat = b.lat_lo + (0.02 + 0.96 * rng.uniform()) * (b.lat_hi - b.lat_lo);
                    const double lng = b.lng_lo + (0.02 + 0.96 * rng.uniform()) * (b.lng_hi - b.lng_lo);
                    out.push_back({"s" + std::to_string(id++), t, lat, lng});
                }
            }
        }
    }
    return out;
}

}  // namespace stcl
