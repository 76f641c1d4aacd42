#include "doctest.h"

#include "gradcheck.hpp"
#include "stcl/deepstcl.hpp"
#include "stcl/errors.hpp"
#include "stcl/training.hpp"

#include <cmath>

using namespace stcl;
using testutil::random_tensor;

namespace {

DemandSeries random_series(std::size_t rows, std::size_t cols, std::size_t T, Rng& rng, double hi = 10) {
    std::vector<Tensor> counts;
    for (std::size_t k = 0; k < T; ++k) counts.push_back(random_tensor(Shape{rows, cols}, rng, 0, hi));
    return DemandSeries(GridSpec::unit(rows, cols), 3600, 0, counts);
}

SamplingConfig tiny_sampling() {
    SamplingConfig s;
    s.closeness_len = 2;
    s.period_len = 2;
    s.trend_len = 2;
    s.period_stride = 2;
    s.trend_stride = 3;
    return s;
}

NetworkConfig tiny_network() {
    NetworkConfig n;
    n.hidden = 2;
    return n;
}

// Training-mode loss of a copy, so probing never disturbs the model under test.
double probe_loss(const TrainableForecaster& model, const DemandSeries& series,
                  const std::vector<std::size_t>& targets) {
    auto copy = dynamic_cast<const DeepSTCL&>(model);
    Rng rng(99);
    return copy.train_batch(series, targets, rng);
}

}  // namespace

TEST_CASE("sampling indices") {
    SamplingConfig cfg;
    cfg.closeness_len = 3;
    cfg.period_len = 2;
    CHECK(branch_indices(50, BranchKind::closeness, cfg) == std::vector<std::size_t>{47, 48, 49});
    CHECK(branch_indices(50, BranchKind::period, cfg) == std::vector<std::size_t>{2, 26});
    cfg.trend_len = 1;
    CHECK(branch_indices(200, BranchKind::trend, cfg) == std::vector<std::size_t>{32});
    CHECK_THROWS_AS(branch_indices(47, BranchKind::period, cfg), DataError);

    CHECK(cfg.deepest() == 168);
    CHECK(build_samples(168, cfg).empty());
    CHECK(build_samples(169, cfg).size() == 1);
    CHECK(build_samples(169, cfg).front().target == 168);

    cfg.period_stride = 0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("samples never look ahead") {
    SamplingConfig cfg;
    cfg.closeness_len = 4;
    cfg.period_len = 3;
    cfg.trend_len = 2;
    const auto samples = build_samples(24 * 7 * 3, cfg);
    CHECK(samples.size() == 24 * 7 * 3 - cfg.deepest());
    for (const TrainingSample& s : samples) {
        for (const auto* seq : {&s.closeness, &s.period, &s.trend}) {
            CHECK(std::is_sorted(seq->begin(), seq->end()));
            for (std::size_t i : *seq) CHECK(i < s.target);
        }
        CHECK(s.closeness.size() == 4);
        CHECK(s.period.size() == 3);
        CHECK(s.trend.size() == 2);
    }
}

TEST_CASE("fuse") {
    Rng rng(1);
    const Tensor x = random_tensor(Shape{3, 3}, rng);
    const Tensor third(Shape{3, 3}, 1.0 / 3.0), zero(Shape{3, 3}), one(Shape{3, 3}, 1.0);
    const Tensor f = fuse(x, x, x, third, third, third);
    for (std::size_t i = 0; i < 9; ++i) CHECK(f[i] == doctest::Approx(x[i]).epsilon(1e-15));
    const Tensor y = random_tensor(Shape{3, 3}, rng);
    CHECK(fuse(x, y, y, one, zero, zero) == x);

    const Tensor a(Shape{2, 2}, std::vector<double>{1, 2, 3, 4}), b(Shape{2, 2}, std::vector<double>{-1, 0, 2, 5}),
        c(Shape{2, 2}, std::vector<double>{0.5, 0.5, 1, 1});
    const Tensor wa(Shape{2, 2}, std::vector<double>{2, 0, 1, 1}), wb(Shape{2, 2}, std::vector<double>{1, 1, 0, 2}),
        wc(Shape{2, 2}, std::vector<double>{0, 4, 2, -1});
    CHECK(fuse(a, b, c, wa, wb, wc) == Tensor(Shape{2, 2}, std::vector<double>{1, 2, 5, 13}));
    CHECK_THROWS_AS(fuse(a, b, c, wa, wb, Tensor(Shape{2, 3})), ShapeError);
}

TEST_CASE("mse loss") {
    const Tensor p(Shape{1, 2}, std::vector<double>{1, 1}), t(Shape{1, 2}, std::vector<double>{0, 2});
    CHECK(mse_loss(p, t) == 1.0);
    CHECK(mse_loss(p, p) == 0.0);
    CHECK(mse_loss_grad(p, t) == Tensor(Shape{1, 2}, std::vector<double>{1, -1}));
}

TEST_CASE("model structure") {
    const auto model = DeepSTCL::fused(4, 4, tiny_sampling(), tiny_network(), 3);
    CHECK(model.kind() == "deepstcl");
    CHECK(model.min_history() == 6);
    const ParamStore& s = model.params();
    CHECK(s.contains("fusion.wc"));
    CHECK(s.value("fusion.wp")[5] == 1.0 / 3.0);
    const auto c = s.checksum("closeness."), p = s.checksum("period."), t = s.checksum("trend.");
    CHECK(c != p);
    CHECK(p != t);
    CHECK(c != t);

    const auto clc = DeepSTCL::single(BranchKind::closeness, 4, 4, tiny_sampling(), tiny_network(), 3);
    CHECK(clc.kind() == "clc");
    CHECK(clc.min_history() == 2);
    CHECK_FALSE(clc.params().contains("fusion.wc"));
    // A single-branch model starts from the same weights as that branch of the fused model.
    CHECK(clc.params().checksum("closeness.") == c);
    CHECK(DeepSTCL::single(BranchKind::trend, 4, 4, tiny_sampling(), tiny_network(), 3).kind() == "clt");
}

TEST_CASE("forward shape and determinism") {
    Rng rng(2);
    const DemandSeries series = random_series(4, 4, 12, rng);
    auto model = DeepSTCL::fused(4, 4, tiny_sampling(), tiny_network(), 5);
    model.fit_scale(series, 12);
    const std::vector<std::size_t> targets{6, 9, 11};
    const auto inputs = model.assemble_inputs(series, targets);
    REQUIRE(inputs.size() == 3);
    CHECK(inputs[1].shape() == Shape{3, 2, 1, 4, 4});
    // Period input for target 9 holds snapshots 5 and 7 scaled.
    CHECK(inputs[1].at({1, 0, 0, 2, 3}) == series.counts(5).at({2, 3}) / model.scale());
    CHECK(inputs[1].at({1, 1, 0, 2, 3}) == series.counts(7).at({2, 3}) / model.scale());

    Rng a(1), b(1);
    const Tensor pa = model.forward(inputs, Mode::train, a), pb = model.forward(inputs, Mode::train, b);
    CHECK(pa.shape() == Shape{3, 4, 4});
    CHECK(pa == pb);

    CHECK_THROWS_AS(model.predict(series, std::vector<std::size_t>{5}), DataError);
    CHECK_THROWS_AS(model.eval_loss(series, std::vector<std::size_t>{12}), DataError);
    const DemandSeries other = random_series(3, 4, 12, rng);
    try {
        model.predict(other, std::vector<std::size_t>{8});
        FAIL("expected a grid mismatch");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("4x4") != std::string::npos);
        CHECK(std::string(e.what()).find("3x4") != std::string::npos);
    }
}

TEST_CASE("fusion gradient identity and branch independence") {
    Rng rng(3);
    const DemandSeries series = random_series(4, 4, 10, rng);
    auto model = DeepSTCL::fused(4, 4, tiny_sampling(), tiny_network(), 7);
    model.fit_scale(series, 10);
    for (const char* n : {"fusion.wc", "fusion.wp", "fusion.wt"})
        for (double& v : model.params().value(n).values()) v = rng.uniform(-1, 1);
    const std::vector<std::size_t> targets{7, 8};
    const auto inputs = model.assemble_inputs(series, targets);
    const Tensor truth(Shape{2, 4, 4}, std::vector<double>(32, 0.4));

    Rng r(5);
    DeepSTCL::Trace trace;
    const Tensor pred = model.forward(inputs, Mode::train, r, &trace);
    model.params().zero_grad();
    model.backward(trace, mse_loss_grad(pred, truth));
    const Tensor& gwc = model.params().grad("fusion.wc");
    for (std::size_t i = 0; i < 16; ++i) {
        double expect = 0;
        for (std::size_t b = 0; b < 2; ++b)
            expect += (pred[b * 16 + i] - truth[b * 16 + i]) * (2.0 / 32.0) * trace.last[0][b * 16 + i];
        CHECK(gwc[i] == doctest::Approx(expect).epsilon(1e-13));
    }

    auto zeroed = model;
    for (Parameter& p : zeroed.params().entries())
        if (p.name.rfind("closeness.", 0) == 0 && p.trainable) p.value.fill(0.0);
    Rng r2(5);
    DeepSTCL::Trace trace2;
    const Tensor pred2 = zeroed.forward(inputs, Mode::train, r2, &trace2);
    const Tensor& wc = model.params().value("fusion.wc");
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < 16; ++i)
            CHECK(pred2[b * 16 + i] - pred[b * 16 + i] ==
                  doctest::Approx(wc[i] * (trace2.last[0][b * 16 + i] - trace.last[0][b * 16 + i])).epsilon(1e-12));
}

TEST_CASE("end-to-end gradient check") {
    Rng rng(4);
    const DemandSeries series = random_series(4, 4, 10, rng);
    auto model = DeepSTCL::fused(4, 4, tiny_sampling(), tiny_network(), 11);
    model.fit_scale(series, 10);
    for (Parameter& p : model.params().entries())
        if (p.trainable && p.name.rfind("fusion.", 0) != 0)
            for (double& v : p.value.values()) v += rng.uniform(-0.2, 0.2);
    const std::vector<std::size_t> targets{6, 8, 9};

    model.params().zero_grad();
    Rng r(99);
    model.train_batch(series, targets, r);
    double worst = 0;
    for (Parameter& p : model.params().entries()) {
        if (!p.trainable) continue;
        const Tensor analytic = p.grad;
        auto loss = [&] { return probe_loss(model, series, targets); };
        const double e = testutil::max_rel_error(analytic, testutil::numeric_grad(p.value, loss, 1e-5));
        CAPTURE(p.name);
        CHECK(e < 1e-4);
        worst = std::max(worst, e);
    }
    MESSAGE("worst relative error " << worst);
}

TEST_CASE("training") {
    Rng rng(5);
    const DemandSeries series = random_series(4, 4, 40, rng);
    const auto targets = target_range(6, 40);
    TrainConfig cfg;
    cfg.batch_size = 8;

    SUBCASE("zero epochs leave the model unchanged") {
        auto model = DeepSTCL::fused(4, 4, tiny_sampling(), tiny_network(), 1);
        const auto before = model.params().checksum();
        cfg.epochs = 0;
        Rng r(1);
        const auto h = train(model, series, targets, cfg, r);
        CHECK(h.epochs.empty());
        CHECK(model.params().checksum() == before);
    }
    SUBCASE("fixed seed gives identical histories") {
        cfg.epochs = 3;
        std::vector<double> losses[2];
        std::uint64_t sums[2];
        for (int run = 0; run < 2; ++run) {
            auto model = DeepSTCL::fused(4, 4, tiny_sampling(), tiny_network(), 1);
            model.fit_scale(series, 40);
            Rng r(42);
            const auto h = train(model, series, targets, cfg, r);
            REQUIRE(h.epochs.size() == 3);
            for (const auto& e : h.epochs) {
                losses[run].push_back(e.train_loss);
                losses[run].push_back(*e.val_loss);
            }
            sums[run] = model.params().checksum();
        }
        CHECK(losses[0] == losses[1]);
        CHECK(sums[0] == sums[1]);
    }
    SUBCASE("early stopping restores the best epoch") {
        cfg.epochs = 30;
        cfg.patience = 2;
        cfg.adam.lr = 0.05;
        auto model = DeepSTCL::fused(4, 4, tiny_sampling(), tiny_network(), 1);
        model.fit_scale(series, 40);
        Rng r(3);
        const auto h = train(model, series, targets, cfg, r);
        REQUIRE(h.best_epoch.has_value());
        const double best = *h.epochs[*h.best_epoch - 1].val_loss;
        for (const auto& e : h.epochs) CHECK(*e.val_loss >= best);
        const std::vector<std::size_t> val(targets.end() - 3, targets.end());
        CHECK(model.eval_loss(series, val) == best);
        if (h.stopped_early) CHECK(h.epochs.size() == *h.best_epoch + 2);
    }
    SUBCASE("no validation slice means no early stopping") {
        cfg.epochs = 2;
        cfg.val_fraction = 0.0;
        auto model = DeepSTCL::single(BranchKind::closeness, 4, 4, tiny_sampling(), tiny_network(), 1);
        Rng r(3);
        const auto h = train(model, series, targets, cfg, r);
        CHECK(h.epochs.size() == 2);
        CHECK_FALSE(h.epochs[0].val_loss.has_value());
    }
}
