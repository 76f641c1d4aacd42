#include "doctest.h"

#include "gradcheck.hpp"
#include "stcl/errors.hpp"
#include "stcl/ops.hpp"

#include <cmath>

using namespace stcl;
using testutil::random_tensor;

namespace {
RunningStatsView no_stats(const std::vector<double>& m, const std::vector<double>& v) {
    return {m, v, 0};
}
}  // namespace

TEST_CASE("elementwise ops") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(sigmoid(800.0) == 1.0);
    const Tensor x(Shape{3}, std::vector<double>{-3, 0, 3});
    CHECK(relu(x) == Tensor(Shape{3}, std::vector<double>{0, 0, 3}));
    CHECK(tanh(x)[1] == 0.0);
    CHECK(sigmoid(x)[1] == 0.5);
    const Tensor a(Shape{2}, std::vector<double>{1, 2}), b(Shape{2}, std::vector<double>{3, 4});
    CHECK(hadamard(a, b) == Tensor(Shape{2}, std::vector<double>{3, 8}));
    CHECK(add(a, b) == Tensor(Shape{2}, std::vector<double>{4, 6}));
    CHECK_THROWS_AS(hadamard(a, x), ShapeError);
    CHECK_THROWS_AS(add(a, x), ShapeError);
}

TEST_CASE("elementwise gradients") {
    Rng rng(1);
    Tensor x = random_tensor(Shape{4, 5}, rng, -2, 2);
    const Tensor w = random_tensor(Shape{4, 5}, rng);
    auto check = [&](auto fwd, auto bwd) {
        auto loss = [&] { return testutil::dot(fwd(x), w); };
        const Tensor g = bwd(x, fwd(x), w);
        CHECK(testutil::max_rel_error(g, testutil::numeric_grad(x, loss, 1e-5)) < 1e-6);
    };
    check([](const Tensor& t) { return sigmoid(t); },
          [](const Tensor&, const Tensor& out, const Tensor& g) { return sigmoid_backward(out, g); });
    check([](const Tensor& t) { return stcl::tanh(t); },
          [](const Tensor&, const Tensor& out, const Tensor& g) { return tanh_backward(out, g); });
    // Keep relu inputs away from the kink.
    for (double& v : x.values()) v = v < 0 ? v - 0.1 : v + 0.1;
    check([](const Tensor& t) { return relu(t); },
          [](const Tensor& in, const Tensor&, const Tensor& g) { return relu_backward(in, g); });

    // sum(w . x) has gradient x with respect to w.
    Tensor wt = random_tensor(Shape{3}, rng);
    const Tensor xv = random_tensor(Shape{3}, rng);
    auto bil = [&] { return hadamard(wt, xv).sum(); };
    const auto ng = testutil::numeric_grad(wt, bil, 1e-5);
    for (std::size_t i = 0; i < 3; ++i) CHECK(ng[i] == doctest::Approx(xv[i]).epsilon(1e-9));
}

TEST_CASE("batch norm forward examples") {
    const std::vector<double> m{0}, v{1};
    const Tensor g1(Shape{1}, 1.0), b0(Shape{1});
    const auto r = batch_norm(Tensor(Shape{2, 1}, std::vector<double>{1, 3}), g1, b0, no_stats(m, v),
                              Mode::train, 1);
    CHECK(r.output[0] == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK(r.output[1] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(r.batch_mean[0] == 2.0);
    CHECK(r.batch_var[0] == 1.0);

    const auto c = batch_norm(Tensor(Shape{4, 1}, 7.0), g1, b0, no_stats(m, v), Mode::train, 1);
    for (double x : c.output.values()) CHECK(x == 0.0);

    const auto a = batch_norm(Tensor(Shape{2, 1}, std::vector<double>{1, 3}), Tensor(Shape{1}, 2.0),
                              Tensor(Shape{1}, 5.0), no_stats(m, v), Mode::train, 1);
    for (std::size_t i = 0; i < 2; ++i) CHECK(a.output[i] == doctest::Approx(2 * r.normalized[i] + 5));
}

TEST_CASE("batch norm normalizes each channel") {
    Rng rng(2);
    const Tensor x = random_tensor(Shape{3, 4, 5, 5}, rng, -3, 7);
    const std::vector<double> m(4, 0), v(4, 1);
    const auto r = batch_norm(x, Tensor(Shape{4}, 1.0), Tensor(Shape{4}), no_stats(m, v), Mode::train, 1);
    for (std::size_t c = 0; c < 4; ++c) {
        double s = 0, s2 = 0;
        for (std::size_t b = 0; b < 3; ++b)
            for (std::size_t i = 0; i < 25; ++i) s += r.output[(b * 4 + c) * 25 + i];
        const double mean = s / 75;
        for (std::size_t b = 0; b < 3; ++b)
            for (std::size_t i = 0; i < 25; ++i) s2 += std::pow(r.output[(b * 4 + c) * 25 + i] - mean, 2);
        CHECK(std::abs(mean) < 1e-10);
        CHECK(std::abs(s2 / 75 - 1.0) < 1e-4);
    }
}

TEST_CASE("batch norm inference needs statistics") {
    const std::vector<double> m{2}, v{4};
    const Tensor x(Shape{2, 1}, std::vector<double>{2, 6});
    CHECK_THROWS_AS(batch_norm(x, Tensor(Shape{1}, 1.0), Tensor(Shape{1}), no_stats(m, v), Mode::infer, 1),
                    DataError);
    const auto r = batch_norm(x, Tensor(Shape{1}, 1.0), Tensor(Shape{1}), RunningStatsView{m, v, 1},
                              Mode::infer, 1);
    CHECK(r.output[0] == 0.0);
    CHECK(r.output[1] == doctest::Approx(4.0 / std::sqrt(4.0 + kBatchNormEps)));
}

TEST_CASE("running statistics follow an exponential average") {
    std::vector<double> m{0}, v{1};
    const auto r = batch_norm(Tensor(Shape{2, 1}, std::vector<double>{1, 3}), Tensor(Shape{1}, 1.0),
                              Tensor(Shape{1}), RunningStatsView{m, v, 0}, Mode::train, 1);
    update_running_stats(m, v, r, 0.1);
    CHECK(m[0] == doctest::Approx(0.2));
    CHECK(v[0] == doctest::Approx(1.0));
}

TEST_CASE("batch norm gradients") {
    Rng rng(3);
    Tensor x = random_tensor(Shape{2, 3, 2, 4}, rng, -2, 2);
    Tensor gamma = random_tensor(Shape{3}, rng, 0.5, 1.5), beta = random_tensor(Shape{3}, rng);
    const Tensor w = random_tensor(Shape{2, 3, 2, 4}, rng);
    const std::vector<double> m(3, 0.3), v(3, 1.7);
    for (Mode mode : {Mode::train, Mode::infer}) {
        const RunningStatsView view{m, v, 5};
        auto loss = [&] { return testutil::dot(batch_norm(x, gamma, beta, view, mode, 1).output, w); };
        const auto g = batch_norm_backward(batch_norm(x, gamma, beta, view, mode, 1), gamma, w);
        CHECK(testutil::max_rel_error(g.input, testutil::numeric_grad(x, loss, 1e-5)) < 1e-6);
        CHECK(testutil::max_rel_error(g.gamma, testutil::numeric_grad(gamma, loss, 1e-5)) < 1e-6);
        CHECK(testutil::max_rel_error(g.beta, testutil::numeric_grad(beta, loss, 1e-5)) < 1e-6);
    }
}

TEST_CASE("dropout") {
    Rng rng(4);
    const Tensor x = random_tensor(Shape{10, 10}, rng);
    SUBCASE("rate zero and inference are identities without draws") {
        Rng a(9), b(9);
        const auto r0 = dropout(x, 0.0, a, Mode::train);
        CHECK(r0.output == x);
        for (double m : r0.mask.values()) CHECK(m == 1.0);
        CHECK(dropout(x, 0.7, a, Mode::infer).output == x);
        CHECK(a.next_u64() == b.next_u64());
    }
    SUBCASE("survivor fraction") {
        const auto r = dropout(Tensor(Shape{100000}, 1.0), 0.5, rng, Mode::train);
        const double kept = r.mask.sum() / 100000.0;
        CHECK(kept > 0.49);
        CHECK(kept < 0.51);
        for (std::size_t i = 0; i < 100; ++i) CHECK(r.output[i] == r.mask[i] * 2.0);
    }
    SUBCASE("expectation matches the input") {
        const Tensor one(Shape{1}, 3.0);
        const int n = 20000;
        double s = 0, s2 = 0;
        for (int i = 0; i < n; ++i) {
            const double y = dropout(one, 0.3, rng, Mode::train).output[0];
            s += y;
            s2 += y * y;
        }
        const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
        CHECK(std::abs(mean - 3.0) < 3 * se);
    }
    SUBCASE("backward routes through the mask") {
        const auto r = dropout(x, 0.4, rng, Mode::train);
        const Tensor g = dropout_backward(r, Tensor(Shape{10, 10}, 1.0));
        for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == r.mask[i] * r.scale);
    }
    SUBCASE("rate bounds") {
        CHECK_THROWS(dropout(x, 1.0, rng, Mode::train));
        CHECK_THROWS(dropout(x, -0.1, rng, Mode::train));
    }
    SUBCASE("pure for equal rng states") {
        Rng a(11), b(11);
        CHECK(dropout(x, 0.5, a, Mode::train).output == dropout(x, 0.5, b, Mode::train).output);
    }
}
