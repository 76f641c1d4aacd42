#include "stcl/baselines.hpp"

#include "stcl/conv.hpp"
#include "stcl/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stcl {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void glorot_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : t.values()) v = rng.uniform(-limit, limit);
}

RowMat sigmoid_of(const RowMat& z) {
    return z.unaryExpr([](double v) { return sigmoid(v); });
}

RowMat tanh_of(const RowMat& z) {
    return z.unaryExpr([](double v) { return std::tanh(v); });
}

struct GateBlocks {
    RowMat i, f, g, o, c, tc, h;
};

// One step of the dense LSTM on column-stacked inputs x [in, N].
GateBlocks lstm_columns(const ConstMap& wx, const ConstMap& wh, const Eigen::VectorXd& b,
                        const RowMat& x, const RowMat& h_prev, const RowMat& c_prev) {
    const Eigen::Index h = wh.cols();
    RowMat z = wx * x + wh * h_prev;
    z.colwise() += b;
    GateBlocks r;
    r.i = sigmoid_of(z.topRows(h));
    r.f = sigmoid_of(z.middleRows(h, h));
    r.g = tanh_of(z.middleRows(2 * h, h));
    r.o = sigmoid_of(z.bottomRows(h));
    r.c = r.f.cwiseProduct(c_prev) + r.i.cwiseProduct(r.g);
    r.tc = tanh_of(r.c);
    r.h = r.o.cwiseProduct(r.tc);
    return r;
}

void check_lstm_weights(const Tensor& wx, const Tensor& wh, const Tensor& b) {
    if (wh.rank() != 2 || wh.dim(0) != 4 * wh.dim(1))
        throw ShapeError("lstm state weights must be [4h, h], got " + shape_string(wh.shape()));
    const std::size_t h = wh.dim(1);
    if (wx.rank() != 2 || wx.dim(0) != 4 * h)
        throw ShapeError("lstm input weights must be [4h, in], got " + shape_string(wx.shape()));
    if (b.shape() != Shape{4 * h})
        throw ShapeError("lstm bias must be [4h], got " + shape_string(b.shape()));
}

}  // namespace

void LSTMCellConfig::validate() const {
    if (input_size == 0 || hidden_size == 0 || lookback == 0)
        throw std::invalid_argument("lstm sizes must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
}

LSTMState lstm_cell_step(const Tensor& wx, const Tensor& wh, const Tensor& b,
                         std::span<const double> x, const LSTMState& prev) {
    check_lstm_weights(wx, wh, b);
    const std::size_t h = wh.dim(1), in = wx.dim(1);
    if (x.size() != in) throw ShapeError("lstm input has " + std::to_string(x.size()) +
                                         " entries, expected " + std::to_string(in));
    if (prev.h.size() != h || prev.c.size() != h)
        throw ShapeError("lstm state must have " + std::to_string(h) + " entries");
    const ConstMap mx(wx.data(), 4 * h, in), mh(wh.data(), 4 * h, h);
    const Eigen::VectorXd bias = Eigen::Map<const Eigen::VectorXd>(b.data(), 4 * h);
    const RowMat xc = Eigen::Map<const RowMat>(x.data(), in, 1);
    const RowMat hc = Eigen::Map<const RowMat>(prev.h.data(), h, 1);
    const RowMat cc = Eigen::Map<const RowMat>(prev.c.data(), h, 1);
    const GateBlocks r = lstm_columns(mx, mh, bias, xc, hc, cc);
    LSTMState out{std::vector<double>(h), std::vector<double>(h)};
    for (std::size_t j = 0; j < h; ++j) {
        out.h[j] = r.h(static_cast<Eigen::Index>(j), 0);
        out.c[j] = r.c(static_cast<Eigen::Index>(j), 0);
    }
    return out;
}

// ---------------------------------------------------------------------------

struct CellLSTM::Pass {
    std::vector<RowMat> x, h_prev, c_prev;
    std::vector<GateBlocks> gates;
    DropoutResult drop;
};

CellLSTM::CellLSTM(std::size_t rows, std::size_t cols, LSTMCellConfig cfg, std::uint64_t init_seed)
    : TrainableForecaster(rows, cols), cfg_(cfg) {
    cfg_.validate();
    if (cfg_.input_size != 1) throw std::invalid_argument("per-cell lstm takes scalar inputs");
    Rng rng(init_seed);
    const std::size_t h = cfg_.hidden_size;
    Tensor wx(Shape{4 * h, 1}), wh(Shape{4 * h, h}), b(Shape{4 * h});
    glorot_fill(wx, 1, h, rng);
    glorot_fill(wh, h, h, rng);
    for (std::size_t j = h; j < 2 * h; ++j) b[j] = 1.0;
    Tensor hw(Shape{1, h});
    glorot_fill(hw, h, 1, rng);
    store_.add("lstm.wx", std::move(wx));
    store_.add("lstm.wh", std::move(wh));
    store_.add("lstm.b", std::move(b));
    store_.add("head.w", std::move(hw));
    store_.add("head.b", Tensor(Shape{1}));
}

Tensor CellLSTM::run(const DemandSeries& series, std::span<const std::size_t> targets, Mode mode,
                     Rng* rng, Pass* pass) const {
    const std::size_t P = rows_ * cols_, N = targets.size() * P, L = cfg_.lookback;
    const std::size_t h = cfg_.hidden_size;
    const Eigen::Index hn = static_cast<Eigen::Index>(h), nn = static_cast<Eigen::Index>(N);
    const Tensor& wx = store_.value("lstm.wx");
    const Tensor& wh = store_.value("lstm.wh");
    const ConstMap mx(wx.data(), 4 * hn, 1), mh(wh.data(), 4 * hn, hn);
    const Eigen::VectorXd bias = Eigen::Map<const Eigen::VectorXd>(store_.value("lstm.b").data(), 4 * hn);
    const double inv = 1.0 / scale();

    RowMat hs = RowMat::Zero(hn, nn), cs = RowMat::Zero(hn, nn);
    for (std::size_t s = 0; s < L; ++s) {
        RowMat x(1, nn);
        for (std::size_t b = 0; b < targets.size(); ++b) {
            const Tensor& c = series.counts(targets[b] - L + s);
            for (std::size_t i = 0; i < P; ++i) x(0, static_cast<Eigen::Index>(b * P + i)) = c[i] * inv;
        }
        GateBlocks g = lstm_columns(mx, mh, bias, x, hs, cs);
        if (pass) {
            pass->x.push_back(std::move(x));
            pass->h_prev.push_back(hs);
            pass->c_prev.push_back(cs);
        }
        hs = g.h;
        cs = g.c;
        if (pass) pass->gates.push_back(std::move(g));
    }

    Tensor last(Shape{h, N});
    MutMap(last.data(), hn, nn) = hs;
    Rng dummy(0);
    DropoutResult drop = dropout(last, cfg_.dropout, rng ? *rng : dummy, mode);
    const ConstMap hd(drop.output.data(), hn, nn);
    const ConstMap hw(store_.value("head.w").data(), 1, hn);
    const RowMat y = (hw * hd).array() + store_.value("head.b")[0];
    if (pass) pass->drop = std::move(drop);

    Tensor out(Shape{targets.size(), rows_, cols_});
    MutMap(out.data(), 1, nn) = y;
    return out;
}

double CellLSTM::train_batch(const DemandSeries& series, std::span<const std::size_t> targets,
                             Rng& rng) {
    check_compatible(series);
    check_targets(series, targets, true);
    Pass pass;
    const Tensor pred = run(series, targets, Mode::train, &rng, &pass);
    const Tensor truth = gather_targets(series, targets);
    const double loss = mse_loss(pred, truth);
    const Tensor gy = mse_loss_grad(pred, truth);

    const Eigen::Index hn = static_cast<Eigen::Index>(cfg_.hidden_size);
    const Eigen::Index nn = static_cast<Eigen::Index>(pred.size());
    const ConstMap dy(gy.data(), 1, nn);
    const ConstMap hd(pass.drop.output.data(), hn, nn);
    MutMap(store_.grad("head.w").data(), 1, hn) += dy * hd.transpose();
    store_.grad("head.b")[0] += dy.sum();

    const ConstMap hw(store_.value("head.w").data(), 1, hn);
    Tensor dhd(Shape{cfg_.hidden_size, pred.size()});
    MutMap(dhd.data(), hn, nn) = hw.transpose() * dy;
    const Tensor dlast = dropout_backward(pass.drop, dhd);

    const ConstMap wh(store_.value("lstm.wh").data(), 4 * hn, hn);
    MutMap gwx(store_.grad("lstm.wx").data(), 4 * hn, 1);
    MutMap gwh(store_.grad("lstm.wh").data(), 4 * hn, hn);
    Eigen::Map<Eigen::VectorXd> gb(store_.grad("lstm.b").data(), 4 * hn);

    RowMat dh = ConstMap(dlast.data(), hn, nn);
    RowMat dc = RowMat::Zero(hn, nn);
    RowMat dz(4 * hn, nn);
    for (std::size_t s = pass.gates.size(); s-- > 0;) {
        const GateBlocks& g = pass.gates[s];
        const auto one = [&](const RowMat& m) { return (1.0 - m.array()).matrix(); };
        dc += dh.cwiseProduct(g.o).cwiseProduct((1.0 - g.tc.array().square()).matrix());
        dz.bottomRows(hn) = dh.cwiseProduct(g.tc).cwiseProduct(g.o).cwiseProduct(one(g.o));
        dz.topRows(hn) = dc.cwiseProduct(g.g).cwiseProduct(g.i).cwiseProduct(one(g.i));
        dz.middleRows(hn, hn) = dc.cwiseProduct(pass.c_prev[s]).cwiseProduct(g.f).cwiseProduct(one(g.f));
        dz.middleRows(2 * hn, hn) =
            dc.cwiseProduct(g.i).cwiseProduct((1.0 - g.g.array().square()).matrix());
        gwx.noalias() += dz * pass.x[s].transpose();
        gwh.noalias() += dz * pass.h_prev[s].transpose();
        gb += dz.rowwise().sum();
        dh.noalias() = wh.transpose() * dz;
        dc = dc.cwiseProduct(g.f);
    }
    return loss;
}

Tensor CellLSTM::predict_scaled(const DemandSeries& series,
                                std::span<const std::size_t> targets) const {
    return run(series, targets, Mode::infer, nullptr, nullptr);
}

DemandSnapshot CellLSTM::forecast_all_cells(const DemandSeries& series) const {
    if (series.size() < cfg_.lookback) {
        throw DataError("lstm needs at least " + std::to_string(cfg_.lookback) +
                        " buckets, series has " + std::to_string(series.size()));
    }
    const std::size_t t = series.size();
    const auto out = predict(series, std::span<const std::size_t>(&t, 1));
    return DemandSnapshot(series.grid(), out.front(), t);
}

// ---------------------------------------------------------------------------

void CNNConfig::validate() const {
    if (filters1 == 0 || filters2 == 0) throw std::invalid_argument("cnn filter counts must be positive");
    if (kernel % 2 == 0) throw std::invalid_argument("cnn kernel must be odd");
    if (!(bn_momentum > 0.0 && bn_momentum <= 1.0))
        throw std::invalid_argument("batch-norm momentum must lie in (0, 1]");
}

namespace {

// Applies a conv2d layer to every sample of a [B, C, rows, cols] batch.
Tensor conv_batch(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
    const std::size_t B = input.dim(0), R = input.dim(2), C = input.dim(3);
    const std::size_t cin = input.dim(1), cout = kernel.dim(0);
    Tensor out(Shape{B, cout, R, C});
    for (std::size_t b = 0; b < B; ++b) {
        const auto s = input.slab(b);
        const Tensor y = conv2d(Tensor(Shape{cin, R, C}, std::vector<double>(s.begin(), s.end())),
                                kernel, bias);
        std::copy_n(y.data(), y.size(), out.data() + b * y.size());
    }
    return out;
}

// Accumulates kernel/bias gradients and returns dL/dinput for conv_batch.
Tensor conv_batch_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                           Tensor& grad_kernel, Tensor& grad_bias, bool need_input) {
    const std::size_t B = input.dim(0), R = input.dim(2), C = input.dim(3);
    const std::size_t cin = input.dim(1), cout = kernel.dim(0);
    Tensor grad_in = need_input ? Tensor::zeros_like(input) : Tensor();
    for (std::size_t b = 0; b < B; ++b) {
        const auto s = input.slab(b);
        const auto g = grad_out.slab(b);
        const ConvGrads r =
            conv2d_backward(Tensor(Shape{cin, R, C}, std::vector<double>(s.begin(), s.end())), kernel,
                            Tensor(Shape{cout, R, C}, std::vector<double>(g.begin(), g.end())));
        for (std::size_t i = 0; i < grad_kernel.size(); ++i) grad_kernel[i] += r.kernel[i];
        for (std::size_t i = 0; i < grad_bias.size(); ++i) grad_bias[i] += r.bias[i];
        if (need_input) std::copy_n(r.input.data(), r.input.size(), grad_in.data() + b * r.input.size());
    }
    return grad_in;
}

RunningStatsView running_view(const ParamStore& store, const std::string& bn) {
    return {store.value(bn + "running_mean").values(), store.value(bn + "running_var").values(),
            store.value(bn + "updates")[0]};
}

}  // namespace

SnapshotCNN::SnapshotCNN(std::size_t rows, std::size_t cols, CNNConfig cfg, std::uint64_t init_seed)
    : TrainableForecaster(rows, cols), cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    const std::size_t k = cfg_.kernel, taps = k * k, f1 = cfg_.filters1, f2 = cfg_.filters2;
    Tensor w1(Shape{f1, 1, k, k}), w2(Shape{f2, f1, k, k}), w3(Shape{1, f2, k, k});
    glorot_fill(w1, taps, f1 * taps, rng);
    glorot_fill(w2, f1 * taps, f2 * taps, rng);
    glorot_fill(w3, f2 * taps, taps, rng);
    store_.add("conv1.w", std::move(w1));
    store_.add("conv1.b", Tensor(Shape{f1}));
    store_.add("bn1.gamma", Tensor(Shape{f1}, 1.0));
    store_.add("bn1.beta", Tensor(Shape{f1}));
    store_.add("bn1.running_mean", Tensor(Shape{f1}), false);
    store_.add("bn1.running_var", Tensor(Shape{f1}, 1.0), false);
    store_.add("bn1.updates", Tensor(Shape{1}), false);
    store_.add("conv2.w", std::move(w2));
    store_.add("conv2.b", Tensor(Shape{f2}));
    store_.add("bn2.gamma", Tensor(Shape{f2}, 1.0));
    store_.add("bn2.beta", Tensor(Shape{f2}));
    store_.add("bn2.running_mean", Tensor(Shape{f2}), false);
    store_.add("bn2.running_var", Tensor(Shape{f2}, 1.0), false);
    store_.add("bn2.updates", Tensor(Shape{1}), false);
    store_.add("conv3.w", std::move(w3));
    store_.add("conv3.b", Tensor(Shape{1}, 0.1));
}

Tensor SnapshotCNN::forward(const Tensor& input, Mode mode, Trace* trace) const {
    if (input.rank() != 4 || input.dim(1) != 1 || input.dim(2) != rows_ || input.dim(3) != cols_) {
        throw ShapeError("cnn input must be [B, 1, " + std::to_string(rows_) + ", " +
                         std::to_string(cols_) + "], got " + shape_string(input.shape()));
    }
    const Tensor pre1 = conv_batch(input, store_.value("conv1.w"), store_.value("conv1.b"));
    BatchNormResult bn1 = batch_norm(pre1, store_.value("bn1.gamma"), store_.value("bn1.beta"),
                                     running_view(store_, "bn1."), mode, 1);
    const Tensor a2 = relu(bn1.output);
    const Tensor pre2 = conv_batch(a2, store_.value("conv2.w"), store_.value("conv2.b"));
    BatchNormResult bn2 = batch_norm(pre2, store_.value("bn2.gamma"), store_.value("bn2.beta"),
                                     running_view(store_, "bn2."), mode, 1);
    const Tensor a3 = relu(bn2.output);
    const Tensor pre3 = conv_batch(a3, store_.value("conv3.w"), store_.value("conv3.b"));
    Tensor out = relu(pre3);
    if (trace) {
        trace->input = input;
        trace->a2 = a2;
        trace->a3 = a3;
        trace->bn1 = std::move(bn1);
        trace->bn2 = std::move(bn2);
        trace->pre1 = pre1;
        trace->pre2 = pre2;
        trace->pre3 = pre3;
        trace->valid = true;
    }
    return out;
}

void SnapshotCNN::backward(const Trace& trace, const Tensor& grad_out) {
    if (!trace.valid) throw InvariantError("backward needs a trace from a forward pass");
    const Tensor g3 = relu_backward(trace.pre3, grad_out);
    const Tensor da3 = conv_batch_backward(trace.a3, store_.value("conv3.w"), g3,
                                           store_.grad("conv3.w"), store_.grad("conv3.b"), true);
    const Tensor dbn2 = relu_backward(trace.bn2.output, da3);
    const BatchNormGrads b2 = batch_norm_backward(trace.bn2, store_.value("bn2.gamma"), dbn2);
    for (std::size_t i = 0; i < b2.gamma.size(); ++i) {
        store_.grad("bn2.gamma")[i] += b2.gamma[i];
        store_.grad("bn2.beta")[i] += b2.beta[i];
    }
    const Tensor da2 = conv_batch_backward(trace.a2, store_.value("conv2.w"), b2.input,
                                           store_.grad("conv2.w"), store_.grad("conv2.b"), true);
    const Tensor dbn1 = relu_backward(trace.bn1.output, da2);
    const BatchNormGrads b1 = batch_norm_backward(trace.bn1, store_.value("bn1.gamma"), dbn1);
    for (std::size_t i = 0; i < b1.gamma.size(); ++i) {
        store_.grad("bn1.gamma")[i] += b1.gamma[i];
        store_.grad("bn1.beta")[i] += b1.beta[i];
    }
    conv_batch_backward(trace.input, store_.value("conv1.w"), b1.input, store_.grad("conv1.w"),
                        store_.grad("conv1.b"), false);
}

void SnapshotCNN::commit_running_stats(const Trace& trace) {
    if (!trace.valid) throw InvariantError("no forward pass to take statistics from");
    for (const char* bn : {"bn1.", "bn2."}) {
        const std::string p(bn);
        const BatchNormResult& r = p == "bn1." ? trace.bn1 : trace.bn2;
        Tensor& updates = store_.value(p + "updates");
        const double m = std::max(cfg_.bn_momentum, 1.0 / (updates[0] + 1.0));
        update_running_stats(store_.value(p + "running_mean").values(),
                             store_.value(p + "running_var").values(), r, m);
        updates[0] += 1.0;
    }
}

Tensor SnapshotCNN::assemble(const DemandSeries& series, std::span<const std::size_t> targets) const {
    const std::size_t P = rows_ * cols_;
    const double inv = 1.0 / scale();
    Tensor in(Shape{targets.size(), 1, rows_, cols_});
    for (std::size_t b = 0; b < targets.size(); ++b) {
        const Tensor& c = series.counts(targets[b] - 1);
        for (std::size_t i = 0; i < P; ++i) in[b * P + i] = c[i] * inv;
    }
    return in;
}

double SnapshotCNN::train_batch(const DemandSeries& series, std::span<const std::size_t> targets,
                                Rng&) {
    check_compatible(series);
    check_targets(series, targets, true);
    Trace trace;
    const Tensor pred = forward(assemble(series, targets), Mode::train, &trace);
    const Tensor truth = gather_targets(series, targets).reshaped(pred.shape());
    const double loss = mse_loss(pred, truth);
    backward(trace, mse_loss_grad(pred, truth));
    commit_running_stats(trace);
    return loss;
}

Tensor SnapshotCNN::predict_scaled(const DemandSeries& series,
                                   std::span<const std::size_t> targets) const {
    return forward(assemble(series, targets), Mode::infer)
        .reshaped(Shape{targets.size(), rows_, cols_});
}

}  // namespace stcl
