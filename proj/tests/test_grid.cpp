#include "doctest.h"

#include "stcl/errors.hpp"
#include "stcl/grid.hpp"
#include "stcl/rng.hpp"

#include <cmath>
#include <sstream>

using namespace stcl;

namespace {
GridSpec box(std::size_t rows, std::size_t cols) { return GridSpec{0, 1, 0, 1, rows, cols}; }

Tensor mat(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor(Shape{r, c}, std::move(v)); }
}  // namespace

TEST_CASE("grid validation") {
    CHECK_NOTHROW(box(2, 2).validate());
    CHECK_THROWS(GridSpec{1, 1, 0, 1, 2, 2}.validate());
    CHECK_THROWS(GridSpec{0, 1, 2, 1, 2, 2}.validate());
    CHECK_THROWS(GridSpec{0, 1, 0, 1, 0, 2}.validate());
}

TEST_CASE("locate examples") {
    CHECK(locate(box(2, 2), 0.0, 0.0) == CellIndex{0, 0});
    CHECK(locate(box(2, 2), 1.0, 1.0) == CellIndex{1, 1});
    CHECK(locate(box(4, 4), 0.26, 0.74) == CellIndex{1, 2});
    CHECK_FALSE(locate(box(2, 2), -0.01, 0.5).has_value());
    CHECK_FALSE(locate(box(2, 2), 0.5, 1.01).has_value());
    CHECK_FALSE(locate(box(2, 2), std::nan(""), 0.5).has_value());
}

TEST_CASE("locate is total over the box") {
    const GridSpec g{30.6, 30.75, 104.0, 104.2, 7, 9};
    Rng rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double lat = rng.uniform(g.lat_min, g.lat_max), lng = rng.uniform(g.lng_min, g.lng_max);
        const auto c = locate(g, lat, lng);
        REQUIRE(c.has_value());
        CHECK(c->row < g.rows);
        CHECK(c->col < g.cols);
        const CellBounds b = cell_bounds(g, *c);
        CHECK(lat >= b.lat_lo - 1e-12);
        CHECK(lat <= b.lat_hi + 1e-12);
        CHECK(lng >= b.lng_lo - 1e-12);
        CHECK(lng <= b.lng_hi + 1e-12);
    }
}

TEST_CASE("snapshot invariants") {
    CHECK_THROWS(DemandSnapshot(box(2, 2), mat(2, 2, {0, -1, 0, 0}), 0));
    CHECK_THROWS(DemandSnapshot(box(2, 2), Tensor(Shape{2, 3}), 0));
    CHECK(total_demand(DemandSnapshot(box(2, 2), Tensor(Shape{2, 2}), 0)) == 0.0);
    CHECK(total_demand(DemandSnapshot(box(2, 2), mat(2, 2, {1, 2, 3, 4}), 0)) == 10.0);
}

TEST_CASE("coarsen") {
    const DemandSnapshot s(box(2, 2), mat(2, 2, {1, 2, 3, 4}), 3);
    const DemandSnapshot c = coarsen(s, 2);
    CHECK(c.counts == mat(1, 1, {10}));
    CHECK(c.grid.rows == 1);
    CHECK(c.grid.lat_max == 1.0);
    CHECK(c.time_index == 3);
    CHECK(coarsen(s, 1).counts == s.counts);
    CHECK(coarsen(DemandSnapshot(box(4, 4), Tensor(Shape{4, 4}, 1.0), 0), 2).counts ==
          Tensor(Shape{2, 2}, 4.0));
    CHECK_THROWS_AS(coarsen(s, 3), std::invalid_argument);

    Rng rng(2);
    Tensor big(Shape{12, 12});
    for (double& v : big.values()) v = static_cast<double>(rng.below(20));
    const DemandSnapshot b(box(12, 12), big, 0);
    for (std::size_t f : {2, 3, 4, 6, 12}) CHECK(total_demand(coarsen(b, f)) == total_demand(b));
    CHECK(coarsen(coarsen(b, 2), 3).counts == coarsen(b, 6).counts);
    CHECK(coarsen(coarsen(b, 3), 2).counts == coarsen(b, 6).counts);
}

TEST_CASE("series contract and stream round trip") {
    Rng rng(3);
    std::vector<Tensor> counts;
    for (int k = 0; k < 5; ++k) {
        Tensor t(Shape{2, 3});
        for (double& v : t.values()) v = std::round(rng.uniform(0, 50) * 1000) / 1000;
        counts.push_back(t);
    }
    const DemandSeries s(GridSpec::unit(2, 3), 3600, 1477958400, counts);
    CHECK(s.size() == 5);
    CHECK(s.snapshot(4).time_index == 4);
    CHECK(s.time_of(2) == 1477958400 + 7200);
    CHECK(s.slice(1, 3).size() == 2);
    CHECK(s.slice(1, 3).t0() == 1477958400 + 3600);
    CHECK_THROWS(DemandSeries(GridSpec::unit(2, 3), 0, 0, counts));
    CHECK_THROWS(DemandSeries(GridSpec::unit(2, 2), 3600, 0, counts));

    std::ostringstream out;
    write_snapshot_stream(s, out);
    CHECK(out.str().rfind("2 3 5 3600 1477958400\n", 0) == 0);
    std::istringstream in(out.str());
    const DemandSeries back = read_snapshot_stream(in);
    CHECK(back == s);
    std::ostringstream again;
    write_snapshot_stream(back, again);
    CHECK(again.str() == out.str());

    std::istringstream bad("2 3 1 3600 0\n1 2 3\n");
    CHECK_THROWS_AS(read_snapshot_stream(bad), DataError);
    std::istringstream wrong_grid(out.str());
    CHECK_THROWS_AS(read_snapshot_stream(wrong_grid, GridSpec::unit(3, 3)), DataError);

    const DemandSeries coarse = coarsen(DemandSeries(GridSpec::unit(2, 2), 60, 0, {mat(2, 2, {1, 2, 3, 4})}), 2);
    CHECK(coarse.counts(0) == mat(1, 1, {10}));
}
