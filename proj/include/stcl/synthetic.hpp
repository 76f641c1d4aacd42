#pragma once

#include "stcl/grid.hpp"
#include "stcl/ingest.hpp"
#include "stcl/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace stcl {

struct Hotspot {
    double row = 0.0;
    double col = 0.0;
    double amplitude = 0.0;
};

// demand(m, n, k) = max(0, base + daily * sin(2 pi k / 24 + phase(m, n))
//                          + weekly * sin(2 pi k / 168) + hotspot(m, n) + noise)
// phase(m, n) = phase_spread * (distance from the grid centre) / (largest such
// distance), hotspot(m, n) = sum of amplitude * exp(-d^2 / (2 width^2)), and
// noise ~ N(0, noise_sigma). k counts hours from t0, which is midnight UTC by
// default.
struct SyntheticSpec {
    GridSpec grid{30.60, 30.70, 104.00, 104.10, 8, 8};
    std::size_t buckets = 24 * 7 * 6;
    std::int64_t bucket_seconds = 3600;
    std::int64_t t0 = 1477958400;  // 2016-11-01 00:00 UTC
    double base = 20.0;
    double daily = 10.0;
    double weekly = 3.0;
    double phase_spread = 1.0;
    std::vector<Hotspot> hotspots;
    double hotspot_width = 1.5;
    double noise_sigma = 1.0;
    std::uint64_t seed = 1;

    void validate() const;
};

DemandSeries generate_synthetic(const SyntheticSpec& spec);

// Individual orders realizing a series: round(count) pickups per cell and
// bucket at uniform positions inside the cell and times inside the bucket.
// Binning them on the series grid reproduces the rounded counts.
std::vector<OrderRecord> synthesize_orders(const DemandSeries& series, std::uint64_t seed);

}  // namespace stcl
