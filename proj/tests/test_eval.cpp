#include "doctest.h"

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "stcl/errors.hpp"
#include "stcl/eval.hpp"

#include <cmath>
#include <sstream>

using namespace stcl;

namespace {

Tensor row(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(Shape{1, n}, std::move(v));
}

std::vector<double> as_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

DemandSeries constant_series(std::size_t T, double value) {
    std::vector<Tensor> c(T, Tensor(Shape{2, 3}, value));
    return DemandSeries(GridSpec::unit(2, 3), 3600, 1477958400, c);
}

}  // namespace

TEST_CASE("metric hand examples") {
    const Tensor t = row({1, 3}), p = row({2, 5});
    CHECK(rmse(t, p) == doctest::Approx(std::sqrt(2.5)).epsilon(1e-15));
    CHECK(mae(t, p) == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(*mape(row({2, 4}), row({1, 5})) == doctest::Approx(37.5).epsilon(1e-15));
    const MetricReport same = compute_metrics(t, t);
    CHECK(same.rmse == 0.0);
    CHECK(same.mae == 0.0);
    CHECK(*same.mape == 0.0);
    CHECK(same.u == 2);
}

TEST_CASE("metrics match naive recomputation on random pairs") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t r = 1 + rng.below(8), c = 1 + rng.below(8);
        Tensor truth = testutil::random_tensor(Shape{r, c}, rng, 0, 50);
        Tensor pred = testutil::random_tensor(Shape{r, c}, rng, 0, 50);
        for (double& v : truth.values())
            if (rng.uniform() < 0.2) v = 0.0;
        truth[0] = 1.0 + rng.uniform();
        const auto tv = as_vec(truth), pv = as_vec(pred);
        const MetricReport m = compute_metrics(truth, pred);
        CHECK(rel(m.rmse, oracle::rmse(tv, pv)) < 1e-12);
        CHECK(rel(m.mae, oracle::mae(tv, pv)) < 1e-12);
        REQUIRE(m.mape);
        CHECK(rel(*m.mape, oracle::mape(tv, pv)) < 1e-12);
        CHECK(m.rmse >= m.mae);
        CHECK(m.mae >= 0.0);
    }
}

TEST_CASE("mape skips zero-truth cells") {
    const Tensor t = row({2, 4}), p = row({1, 5});
    std::size_t skipped = 99;
    const double base = *mape(t, p, &skipped);
    CHECK(skipped == 0);
    const double with_zero = *mape(row({2, 0, 4}), row({1, 7, 5}), &skipped);
    CHECK(with_zero == base);
    CHECK(skipped == 1);

    const MetricReport all_zero = compute_metrics(row({0, 0}), row({1, 2}));
    CHECK_FALSE(all_zero.mape.has_value());
    CHECK(all_zero.skipped_zero_cells == 2);
    CHECK(all_zero.rmse > 0.0);
}

TEST_CASE("metric shape mismatch is rejected") {
    CHECK_THROWS_AS(rmse(row({1, 2}), row({1, 2, 3})), ShapeError);
}

TEST_CASE("report averaging") {
    MetricReport a{1.0, 0.5, 10.0, 4, 1};
    MetricReport b{3.0, 1.5, std::nullopt, 4, 4};
    const std::vector<MetricReport> both{a, b};
    const MetricReport m = average_reports(both);
    CHECK(m.rmse == 2.0);
    CHECK(m.mae == 1.0);
    CHECK(*m.mape == 10.0);
    CHECK(m.u == 8);
    CHECK(m.skipped_zero_cells == 5);
}

TEST_CASE("hour of day and test targets") {
    const DemandSeries s = constant_series(24 * 4, 1.0);
    CHECK(hour_of_day(s, 0) == 0);
    CHECK(hour_of_day(s, 30) == 6);
    const auto targets = test_targets(s, 1);
    REQUIRE(targets.size() == 24);
    CHECK(targets.front() == 72);
    CHECK(hour_of_day(s, targets.front()) == 0);
    CHECK_THROWS_AS(test_targets(s, 5), DataError);
}

TEST_CASE("persistence on a constant series scores zero at every hour") {
    const DemandSeries s = constant_series(24 * 4, 7.0);
    const PersistenceForecaster f;
    const auto targets = test_targets(s, 3);
    const std::vector<int> hours{6, 9, 12};
    const auto rows = evaluate_at_hours(f, s, targets, hours, true);
    REQUIRE(rows.size() == 4);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(*rows[i].hour == hours[i]);
        CHECK(rows[i].targets == 3);
    }
    CHECK_FALSE(rows[3].hour.has_value());
    CHECK(rows[3].targets == 72);
    for (const auto& r : rows) {
        CHECK(r.report.rmse == 0.0);
        CHECK(r.report.mae == 0.0);
        CHECK(*r.report.mape == 0.0);
    }
}

TEST_CASE("single test day averages one target per hour") {
    std::vector<Tensor> c;
    for (std::size_t k = 0; k < 48; ++k) c.emplace_back(Shape{1, 1}, static_cast<double>(k));
    const DemandSeries s(GridSpec::unit(1, 1), 3600, 0, c);
    const PersistenceForecaster f;
    const std::vector<int> hours{5, 30};
    const auto targets = test_targets(s, 1);
    const auto rows = evaluate_at_hours(f, s, targets, hours, false);
    REQUIRE(rows.size() == 1);  // hour 30 never occurs
    CHECK(rows[0].targets == 1);
    CHECK(rows[0].report.mae == 1.0);
}

TEST_CASE("metrics csv layout") {
    std::vector<ModelMetrics> res(1);
    res[0].model = "persistence";
    res[0].rows.push_back({9, 3, MetricReport{1.5, 1.0, std::nullopt, 6, 6}});
    res[0].rows.push_back({std::nullopt, 72, MetricReport{0.25, 0.125, 12.5, 144, 0}});
    std::ostringstream out;
    write_metrics_csv(res, out);
    CHECK(out.str() ==
          "model,hour,rmse,mae,mape,u,skipped\n"
          "persistence,9,1.5,1,NA,6,6\n"
          "persistence,all,0.25,0.125,12.5,144,0\n");
}

TEST_CASE("heatmap scaling and round trip") {
    const DemandSnapshot snap(GridSpec::unit(2, 2), Tensor(Shape{2, 2}, {0, 10, 5, 10}), 0);
    std::stringstream buf;
    export_heatmap(snap, buf);
    CHECK(buf.str() == "P2\n2 2\n255\n0 255\n128 255\n");
    const auto px = read_graymap(buf);
    CHECK(px == std::vector<std::vector<int>>{{0, 255}, {128, 255}});

    Rng rng(5);
    const Tensor counts = testutil::random_tensor(Shape{3, 4}, rng, 0, 40);
    double mx = 0;
    for (double v : counts.values()) mx = std::max(mx, v);
    std::stringstream b2;
    export_heatmap(DemandSnapshot(GridSpec::unit(3, 4), counts, 0), b2);
    const auto px2 = read_graymap(b2);
    REQUIRE(px2.size() == 3);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c)
            CHECK(px2[r][c] == static_cast<int>(std::floor(255.0 * counts[r * 4 + c] / mx + 0.5)));

    std::stringstream b3;
    export_heatmap(DemandSnapshot(GridSpec::unit(1, 3), Tensor(Shape{1, 3}, 0.0), 0), b3);
    CHECK(b3.str() == "P2\n3 1\n255\n0 0 0\n");
}

TEST_CASE("series export") {
    std::vector<Tensor> c{Tensor(Shape{1, 2}, {1, 2}), Tensor(Shape{1, 2}, {3, 4.5})};
    const DemandSeries s(GridSpec::unit(1, 2), 3600, 0, c);
    std::ostringstream all, one;
    export_series(s, std::nullopt, all);
    export_series(s, CellIndex{0, 1}, one);
    CHECK(all.str() == "time_index,value\n0,3\n1,7.5\n");
    CHECK(one.str() == "time_index,value\n0,2\n1,4.5\n");
    std::ostringstream bad;
    CHECK_THROWS_AS(export_series(s, CellIndex{1, 0}, bad), DataError);
}
