#include "stcl/convlstm.hpp"

#include "stcl/conv.hpp"
#include "stcl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stcl {

void ConvLSTMCellConfig::validate() const {
    if (input_channels == 0 || hidden_channels == 0) {
        throw std::invalid_argument("ConvLSTM cell: channel counts must be >= 1");
    }
    if (kernel_h % 2 == 0 || kernel_w % 2 == 0) {
        throw std::invalid_argument("ConvLSTM cell: kernel extents must be odd");
    }
}

ConvLSTMState ConvLSTMState::zeros(const ConvLSTMCellConfig& cfg, std::size_t rows,
                                   std::size_t cols) {
    return {Tensor(Shape{cfg.hidden_channels, rows, cols}),
            Tensor(Shape{cfg.hidden_channels, rows, cols})};
}

namespace {

void glorot_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : t.values()) v = rng.uniform(-limit, limit);
}

}  // namespace

void init_convlstm_params(ParamStore& store, const std::string& prefix,
                          const ConvLSTMCellConfig& cfg, std::size_t rows, std::size_t cols,
                          Rng& rng) {
    cfg.validate();
    const std::size_t h = cfg.hidden_channels, taps = cfg.kernel_h * cfg.kernel_w;
    Tensor wx(Shape{4 * h, cfg.input_channels, cfg.kernel_h, cfg.kernel_w});
    Tensor wh(Shape{4 * h, h, cfg.kernel_h, cfg.kernel_w});
    // Each gate kernel is its own fan-in/fan-out unit.
    glorot_fill(wx, cfg.input_channels * taps, h * taps, rng);
    glorot_fill(wh, h * taps, h * taps, rng);
    Tensor b(Shape{4 * h});
    for (std::size_t j = h; j < 2 * h; ++j) b[j] = 1.0;  // forget gate starts open
    store.add(prefix + "wx", std::move(wx));
    store.add(prefix + "wh", std::move(wh));
    store.add(prefix + "b", std::move(b));
    store.add(prefix + "wci", Tensor(Shape{h, rows, cols}));
    store.add(prefix + "wcf", Tensor(Shape{h, rows, cols}));
    store.add(prefix + "wco", Tensor(Shape{h, rows, cols}));
}

ConvLSTMWeights ConvLSTMWeights::from(const ParamStore& store, const std::string& prefix) {
    return {&store.value(prefix + "wx"),  &store.value(prefix + "wh"),
            &store.value(prefix + "b"),   &store.value(prefix + "wci"),
            &store.value(prefix + "wcf"), &store.value(prefix + "wco")};
}

ConvLSTMGradRefs ConvLSTMGradRefs::from(ParamStore& store, const std::string& prefix) {
    return {&store.grad(prefix + "wx"),  &store.grad(prefix + "wh"),  &store.grad(prefix + "b"),
            &store.grad(prefix + "wci"), &store.grad(prefix + "wcf"), &store.grad(prefix + "wco")};
}

namespace {

// Geometry of a step. A rank-3 input [C, R, W] is one sample; a rank-4 input
// [B, C, R, W] is a batch whose samples sit side by side in the patch
// matrices, so each gate block is [4h, B * R * W].
struct StepDims {
    bool batched = false;
    std::size_t batch = 1, rows = 0, cols = 0;
    std::size_t positions() const { return rows * cols; }
    std::size_t columns() const { return batch * rows * cols; }
    Shape state_shape(std::size_t hid) const {
        return batched ? Shape{batch, hid, rows, cols} : Shape{hid, rows, cols};
    }
};

StepDims step_dims(const ConvLSTMCellConfig& cfg, const Tensor& x) {
    if (x.rank() != 3 && x.rank() != 4) {
        throw ShapeError("ConvLSTM cell: input " + shape_string(x.shape()) +
                         " is neither [C, rows, cols] nor [B, C, rows, cols]");
    }
    StepDims d;
    d.batched = x.rank() == 4;
    const std::size_t o = d.batched ? 1 : 0;
    d.batch = d.batched ? x.dim(0) : 1;
    if (x.dim(o) != cfg.input_channels) {
        throw ShapeError("ConvLSTM cell: input " + shape_string(x.shape()) + " does not have " +
                         std::to_string(cfg.input_channels) + " channels");
    }
    d.rows = x.dim(o + 1);
    d.cols = x.dim(o + 2);
    return d;
}

StepDims state_dims(const Tensor& state) {
    StepDims d;
    d.batched = state.rank() == 4;
    d.batch = d.batched ? state.dim(0) : 1;
    d.rows = state.dim(state.rank() - 2);
    d.cols = state.dim(state.rank() - 1);
    return d;
}

}  // namespace

ConvLSTMState cell_step(const ConvLSTMCellConfig& cfg, const ConvLSTMWeights& w, const Tensor& x,
                        const ConvLSTMState& prev, CellTrace* trace) {
    const std::size_t hid = cfg.hidden_channels, cin = cfg.input_channels;
    const StepDims d = step_dims(cfg, x);
    const std::size_t B = d.batch, P = d.positions(), N = d.columns();
    const Shape state_shape = d.state_shape(hid);
    if (prev.h.shape() != state_shape || prev.c.shape() != state_shape) {
        throw ShapeError("ConvLSTM cell: state shape " + shape_string(prev.h.shape()) +
                         " does not match " + shape_string(state_shape));
    }
    const Shape peep{hid, d.rows, d.cols};
    if (w.wx->shape() != Shape{4 * hid, cin, cfg.kernel_h, cfg.kernel_w} ||
        w.wh->shape() != Shape{4 * hid, hid, cfg.kernel_h, cfg.kernel_w} ||
        w.wci->shape() != peep || w.wcf->shape() != peep || w.wco->shape() != peep ||
        w.b->size() != 4 * hid) {
        throw ShapeError("ConvLSTM cell: parameter shapes do not match the cell configuration");
    }

    const KernelExtent k{1, cfg.kernel_h, cfg.kernel_w};
    const std::size_t xin = cin * k.taps(), hin = hid * k.taps();
    // A zero hidden state (the first step of a sequence) contributes nothing
    // through the state-to-state kernels; h_cols stays empty to record that.
    const bool h_zero = std::all_of(prev.h.values().begin(), prev.h.values().end(),
                                    [](double v) { return v == 0.0; });
    std::vector<double> x_cols(xin * N), h_cols(h_zero ? 0 : hin * N);
    for (std::size_t b = 0; b < B; ++b) {
        im2col(x.values().subspan(b * cin * P, cin * P), Volume{cin, 1, d.rows, d.cols}, k,
               std::span<double>(x_cols).subspan(b * P), N);
        if (!h_zero) {
            im2col(prev.h.values().subspan(b * hid * P, hid * P), Volume{hid, 1, d.rows, d.cols}, k,
                   std::span<double>(h_cols).subspan(b * P), N);
        }
    }

    std::vector<double> z(4 * hid * N);
    for (std::size_t r = 0; r < 4 * hid; ++r) std::fill_n(z.data() + r * N, N, (*w.b)[r]);
    matmul_add(w.wx->values(), x_cols, z, 4 * hid, xin, N);
    if (!h_zero) matmul_add(w.wh->values(), h_cols, z, 4 * hid, hin, N);

    ConvLSTMState next{Tensor(state_shape), Tensor(state_shape)};
    Tensor gi(state_shape), gf(state_shape), gg(state_shape), go(state_shape), tc(state_shape);
    const std::size_t gate = hid * N;
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t ch = 0; ch < hid; ++ch) {
            const double* zi = z.data() + ch * N + b * P;
            const double* zf = zi + gate;
            const double* zg = zf + gate;
            const double* zo = zg + gate;
            const std::size_t base = (b * hid + ch) * P, pbase = ch * P;
            for (std::size_t p = 0; p < P; ++p) {
                const std::size_t j = base + p, q = pbase + p;
                const double cp = prev.c[j];
                const double i = sigmoid(zi[p] + (*w.wci)[q] * cp);
                const double f = sigmoid(zf[p] + (*w.wcf)[q] * cp);
                const double g = std::tanh(zg[p]);
                const double c = f * cp + i * g;
                const double o = sigmoid(zo[p] + (*w.wco)[q] * c);
                const double t = std::tanh(c);
                gi[j] = i;
                gf[j] = f;
                gg[j] = g;
                go[j] = o;
                tc[j] = t;
                next.c[j] = c;
                next.h[j] = o * t;
            }
        }
    }

    if (trace) {
        trace->x_cols = std::move(x_cols);
        trace->h_cols = std::move(h_cols);
        trace->c_prev = prev.c;
        trace->i = std::move(gi);
        trace->f = std::move(gf);
        trace->g = std::move(gg);
        trace->o = std::move(go);
        trace->c = next.c;
        trace->tanh_c = std::move(tc);
    }
    return next;
}

namespace {

CellStepGrads cell_backward(const ConvLSTMCellConfig& cfg, const ConvLSTMWeights& w,
                            const CellTrace& trace, const Tensor& grad_h, const Tensor& grad_c,
                            const ConvLSTMGradRefs& grads, bool need_input_grad,
                            bool need_state_grad) {
    if (trace.c.empty()) throw InvariantError("ConvLSTM backward called without a forward trace");
    require_same_shape(trace.c, grad_h, "ConvLSTM backward dH");
    require_same_shape(trace.c, grad_c, "ConvLSTM backward dC");
    const std::size_t hid = cfg.hidden_channels, cin = cfg.input_channels;
    const StepDims d = state_dims(trace.c);
    const std::size_t B = d.batch, P = d.positions(), N = d.columns();
    const std::size_t gate = hid * N;

    std::vector<double> dz(4 * gate);
    CellStepGrads out;
    out.c_prev = Tensor::zeros_like(trace.c);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t ch = 0; ch < hid; ++ch) {
            double* dzi = dz.data() + ch * N + b * P;
            double* dzf = dzi + gate;
            double* dzg = dzf + gate;
            double* dzo = dzg + gate;
            const std::size_t base = (b * hid + ch) * P, pbase = ch * P;
            for (std::size_t p = 0; p < P; ++p) {
                const std::size_t j = base + p, q = pbase + p;
                const double i = trace.i[j], f = trace.f[j], g = trace.g[j], o = trace.o[j];
                const double c = trace.c[j], cp = trace.c_prev[j], t = trace.tanh_c[j];
                const double dh = grad_h[j];

                const double d_o = dh * t;
                const double dzo_j = d_o * o * (1.0 - o);
                const double dc = grad_c[j] + dh * o * (1.0 - t * t) + dzo_j * (*w.wco)[q];
                (*grads.wco)[q] += dzo_j * c;

                const double dzi_j = dc * g * i * (1.0 - i);
                const double dzf_j = dc * cp * f * (1.0 - f);
                const double dzg_j = dc * i * (1.0 - g * g);
                out.c_prev[j] = dc * f + dzi_j * (*w.wci)[q] + dzf_j * (*w.wcf)[q];
                (*grads.wci)[q] += dzi_j * cp;
                (*grads.wcf)[q] += dzf_j * cp;

                dzi[p] = dzi_j;
                dzf[p] = dzf_j;
                dzg[p] = dzg_j;
                dzo[p] = dzo_j;
            }
        }
    }

    for (std::size_t r = 0; r < 4 * hid; ++r) {
        double s = 0.0;
        const double* row = dz.data() + r * N;
        for (std::size_t p = 0; p < N; ++p) s += row[p];
        (*grads.b)[r] += s;
    }

    const KernelExtent k{1, cfg.kernel_h, cfg.kernel_w};
    const std::size_t xin = cin * k.taps(), hin = hid * k.taps();
    matmul_add_bt(dz, trace.x_cols, grads.wx->values(), 4 * hid, xin, N);
    if (!trace.h_cols.empty()) matmul_add_bt(dz, trace.h_cols, grads.wh->values(), 4 * hid, hin, N);

    out.h_prev = Tensor(trace.c.shape());
    if (need_state_grad) {
        std::vector<double> hcols_grad(hin * N);
        matmul_at(w.wh->values(), dz, hcols_grad, 4 * hid, hin, N);
        for (std::size_t b = 0; b < B; ++b) {
            col2im_add(std::span<const double>(hcols_grad).subspan(b * P), Volume{hid, 1, d.rows, d.cols},
                       k, out.h_prev.values().subspan(b * hid * P, hid * P), N);
        }
    }

    if (need_input_grad) {
        std::vector<double> xcols_grad(xin * N);
        matmul_at(w.wx->values(), dz, xcols_grad, 4 * hid, xin, N);
        out.x = Tensor(d.batched ? Shape{B, cin, d.rows, d.cols} : Shape{cin, d.rows, d.cols});
        for (std::size_t b = 0; b < B; ++b) {
            col2im_add(std::span<const double>(xcols_grad).subspan(b * P), Volume{cin, 1, d.rows, d.cols}, k,
                       out.x.values().subspan(b * cin * P, cin * P), N);
        }
    }
    return out;
}

}  // namespace

CellStepGrads cell_step_backward(const ConvLSTMCellConfig& cfg, const ConvLSTMWeights& w,
                                 const CellTrace& trace, const Tensor& grad_h,
                                 const Tensor& grad_c, const ConvLSTMGradRefs& grads,
                                 bool need_input_grad) {
    return cell_backward(cfg, w, trace, grad_h, grad_c, grads, need_input_grad, true);
}

Tensor convlstm_sequence(const ConvLSTMCellConfig& cfg, const ConvLSTMWeights& w,
                         const Tensor& inputs, std::vector<CellTrace>* trace) {
    if (inputs.rank() != 4 && inputs.rank() != 5) {
        throw ShapeError("ConvLSTM sequence: expected [T, C, rows, cols] or [T, B, C, rows, cols]");
    }
    const std::size_t steps = inputs.dim(0);
    const Shape frame(inputs.shape().begin() + 1, inputs.shape().end());
    Shape state_shape = frame;
    state_shape[state_shape.size() - 3] = cfg.hidden_channels;
    Shape hidden_shape{steps};
    hidden_shape.insert(hidden_shape.end(), state_shape.begin(), state_shape.end());

    Tensor hidden(hidden_shape);
    ConvLSTMState state{Tensor(state_shape), Tensor(state_shape)};
    if (trace) trace->assign(steps, CellTrace{});
    for (std::size_t t = 0; t < steps; ++t) {
        const auto src = inputs.slab(t);
        Tensor x(frame, std::vector<double>(src.begin(), src.end()));
        state = cell_step(cfg, w, x, state, trace ? &(*trace)[t] : nullptr);
        std::copy(state.h.values().begin(), state.h.values().end(), hidden.slab(t).begin());
    }
    return hidden;
}

Tensor convlstm_sequence_backward(const ConvLSTMCellConfig& cfg, const ConvLSTMWeights& w,
                                  const std::vector<CellTrace>& trace, const Tensor& grad_hidden,
                                  const ConvLSTMGradRefs& grads, bool need_input_grad) {
    if (trace.empty()) throw InvariantError("ConvLSTM sequence backward without a forward trace");
    const std::size_t steps = trace.size();
    if (grad_hidden.rank() < 1 || grad_hidden.dim(0) != steps) {
        throw ShapeError("ConvLSTM sequence backward: gradient does not match the trace length");
    }
    const Shape state_shape = trace.front().c.shape();
    if (grad_hidden.size() != steps * trace.front().c.size()) {
        throw ShapeError("ConvLSTM sequence backward: gradient does not match the hidden states");
    }

    Tensor grad_inputs;
    if (need_input_grad) {
        Shape in_shape{steps};
        in_shape.insert(in_shape.end(), state_shape.begin(), state_shape.end());
        in_shape[in_shape.size() - 3] = cfg.input_channels;
        grad_inputs = Tensor(in_shape);
    }

    Tensor dh_next(state_shape), dc_next(state_shape);
    for (std::size_t s = steps; s-- > 0;) {
        const auto gh = grad_hidden.slab(s);
        Tensor dh = dh_next;
        for (std::size_t j = 0; j < dh.size(); ++j) dh[j] += gh[j];
        // The initial state is a constant, so its gradient is never needed.
        CellStepGrads g = cell_backward(cfg, w, trace[s], dh, dc_next, grads, need_input_grad, s > 0);
        if (need_input_grad) std::copy(g.x.values().begin(), g.x.values().end(), grad_inputs.slab(s).begin());
        dh_next = std::move(g.h_prev);
        dc_next = std::move(g.c_prev);
    }
    return grad_inputs;
}

// ---------------------------------------------------------------------------

void BranchConfig::validate() const {
    if (seq_len == 0 || rows == 0 || cols == 0 || hidden == 0) {
        throw std::invalid_argument("branch: sequence length, grid and hidden size must be positive");
    }
    if (kernel % 2 == 0 || output_kernel % 2 == 0) {
        throw std::invalid_argument("branch: kernel sizes must be odd");
    }
    if (output_kt == 0) throw std::invalid_argument("branch: output temporal extent must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("branch: dropout must be in [0, 1)");
}

std::size_t BranchConfig::effective_kt() const {
    std::size_t kt = std::min(output_kt, seq_len);
    if (kt % 2 == 0) --kt;
    return std::max<std::size_t>(kt, 1);
}

ConvLSTMCellConfig BranchConfig::layer_config(std::size_t layer) const {
    return {layer == 0 ? std::size_t{1} : hidden, hidden, kernel, kernel};
}

ConvLSTMBranch::ConvLSTMBranch(BranchConfig cfg, std::string prefix)
    : cfg_(cfg), prefix_(std::move(prefix)) {
    cfg_.validate();
}

void ConvLSTMBranch::init_params(ParamStore& store, Rng& rng) const {
    const std::size_t h = cfg_.hidden;
    init_convlstm_params(store, name("l1."), cfg_.layer_config(0), cfg_.rows, cfg_.cols, rng);
    store.add(name("bn1.gamma"), Tensor(Shape{h}, 1.0));
    store.add(name("bn1.beta"), Tensor(Shape{h}));
    store.add(name("bn1.running_mean"), Tensor(Shape{h}), false);
    store.add(name("bn1.running_var"), Tensor(Shape{h}, 1.0), false);
    store.add(name("bn1.updates"), Tensor(Shape{1}), false);
    init_convlstm_params(store, name("l2."), cfg_.layer_config(1), cfg_.rows, cfg_.cols, rng);
    store.add(name("bn2.gamma"), Tensor(Shape{h}, 1.0));
    store.add(name("bn2.beta"), Tensor(Shape{h}));
    store.add(name("bn2.running_mean"), Tensor(Shape{h}), false);
    store.add(name("bn2.running_var"), Tensor(Shape{h}, 1.0), false);
    store.add(name("bn2.updates"), Tensor(Shape{1}), false);

    const std::size_t kt = cfg_.effective_kt(), k = cfg_.output_kernel;
    Tensor w(Shape{1, h, kt, k, k});
    glorot_fill(w, h * kt * k * k, kt * k * k, rng);
    store.add(name("out.w"), std::move(w));
    // Scaled demand lies in [0, 1]; starting the relu head mid-range keeps
    // edge cells from dying before they learn.
    store.add(name("out.b"), Tensor(Shape{1}, 0.5));
}

namespace {

RunningStatsView running_view(const ParamStore& store, const std::string& bn) {
    return {store.value(bn + "running_mean").values(), store.value(bn + "running_var").values(),
            store.value(bn + "updates")[0]};
}

// [T, h, R, C] <-> [h, T, R, C]
Tensor swap_time_channel(std::span<const double> src, std::size_t a, std::size_t b,
                         std::size_t plane) {
    Tensor out(Shape{b, a, plane});
    for (std::size_t i = 0; i < a; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            std::copy_n(src.data() + (i * b + j) * plane, plane, out.data() + (j * a + i) * plane);
        }
    }
    return out;
}

}  // namespace

Tensor ConvLSTMBranch::forward(const ParamStore& store, const Tensor& inputs, Mode mode, Rng& rng,
                               BranchTrace* trace) const {
    const std::size_t T = cfg_.seq_len, R = cfg_.rows, C = cfg_.cols, h = cfg_.hidden, P = R * C;
    if (inputs.rank() != 5 || inputs.dim(1) != T || inputs.dim(2) != 1 || inputs.dim(3) != R ||
        inputs.dim(4) != C) {
        throw ShapeError("branch " + prefix_ + ": expected input [B, " + std::to_string(T) +
                         ", 1, " + std::to_string(R) + ", " + std::to_string(C) + "], got " +
                         shape_string(inputs.shape()));
    }
    const std::size_t B = inputs.dim(0);
    const ConvLSTMCellConfig c1 = cfg_.layer_config(0), c2 = cfg_.layer_config(1);
    const auto w1 = ConvLSTMWeights::from(store, name("l1."));
    const auto w2 = ConvLSTMWeights::from(store, name("l2."));

    BranchTrace local;
    BranchTrace& tr = trace ? *trace : local;
    tr = BranchTrace{};
    tr.mode = mode;
    tr.batch = B;

    // The recurrent layers run time-major: [T, B, channels, R, C].
    const Tensor seq = swap_time_channel(inputs.values(), B, T, P).reshaped(Shape{T, B, 1, R, C});
    const Tensor h1 = convlstm_sequence(c1, w1, seq, trace ? &tr.layer1 : nullptr);
    tr.bn1 = batch_norm(h1, store.value(name("bn1.gamma")), store.value(name("bn1.beta")),
                        running_view(store, name("bn1.")), mode, 2);
    tr.drop1 = dropout(tr.bn1.output, cfg_.dropout, rng, mode);

    const Tensor h2 = convlstm_sequence(c2, w2, tr.drop1.output, trace ? &tr.layer2 : nullptr);
    tr.bn2 = batch_norm(h2, store.value(name("bn2.gamma")), store.value(name("bn2.beta")),
                        running_view(store, name("bn2.")), mode, 2);
    tr.drop2 = dropout(tr.bn2.output, cfg_.dropout, rng, mode);

    tr.head_pre = Tensor(Shape{B, T, 1, R, C});
    tr.head_inputs.resize(B);
    const Tensor& w_out = store.value(name("out.w"));
    const Tensor& b_out = store.value(name("out.b"));
    const double* h2d = tr.drop2.output.data();
    for (std::size_t b = 0; b < B; ++b) {
        Tensor stacked(Shape{h, T, R, C});
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < h; ++c)
                std::copy_n(h2d + ((t * B + b) * h + c) * P, P, stacked.data() + (c * T + t) * P);
        Tensor y = conv3d(stacked, w_out, b_out);  // [1, T, R, C]
        std::copy(y.values().begin(), y.values().end(), tr.head_pre.slab(b).begin());
        tr.head_inputs[b] = std::move(stacked);
    }
    tr.valid = trace != nullptr;
    return relu(tr.head_pre);
}

void ConvLSTMBranch::backward(ParamStore& store, const BranchTrace& tr, const Tensor& grad_out) const {
    if (!tr.valid) throw InvariantError("branch " + prefix_ + ": backward without a recorded forward pass");
    require_same_shape(tr.head_pre, grad_out, "branch backward");
    const std::size_t T = cfg_.seq_len, R = cfg_.rows, C = cfg_.cols, h = cfg_.hidden, B = tr.batch;
    const std::size_t P = R * C;

    const Tensor g_pre = relu_backward(tr.head_pre, grad_out);
    const Tensor& w_out = store.value(name("out.w"));
    Tensor& gw = store.grad(name("out.w"));
    Tensor g_drop2(Shape{T, B, h, R, C});
    for (std::size_t b = 0; b < B; ++b) {
        const auto src = g_pre.slab(b);
        Tensor gy(Shape{1, T, R, C}, std::vector<double>(src.begin(), src.end()));
        ConvGrads g = conv3d_backward(tr.head_inputs[b], w_out, gy);
        for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += g.kernel[i];
        store.grad(name("out.b"))[0] += g.bias[0];
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < h; ++c)
                std::copy_n(g.input.data() + (c * T + t) * P, P, g_drop2.data() + ((t * B + b) * h + c) * P);
    }

    auto accumulate_bn = [&](const char* bn, const BatchNormGrads& g) {
        Tensor& gg = store.grad(prefix_ + bn + "gamma");
        Tensor& gb = store.grad(prefix_ + bn + "beta");
        for (std::size_t c = 0; c < h; ++c) {
            gg[c] += g.gamma[c];
            gb[c] += g.beta[c];
        }
    };

    BatchNormGrads bn2 = batch_norm_backward(tr.bn2, store.value(name("bn2.gamma")),
                                             dropout_backward(tr.drop2, g_drop2));
    accumulate_bn("bn2.", bn2);

    const ConvLSTMCellConfig c1 = cfg_.layer_config(0), c2 = cfg_.layer_config(1);
    const auto w1 = ConvLSTMWeights::from(store, name("l1."));
    const auto w2 = ConvLSTMWeights::from(store, name("l2."));
    const auto g1 = ConvLSTMGradRefs::from(store, name("l1."));
    const auto g2 = ConvLSTMGradRefs::from(store, name("l2."));

    const Tensor g_drop1 = convlstm_sequence_backward(c2, w2, tr.layer2, bn2.input, g2, true);
    BatchNormGrads bn1 = batch_norm_backward(tr.bn1, store.value(name("bn1.gamma")),
                                             dropout_backward(tr.drop1, g_drop1));
    accumulate_bn("bn1.", bn1);
    convlstm_sequence_backward(c1, w1, tr.layer1, bn1.input, g1, false);
}

void ConvLSTMBranch::commit_running_stats(ParamStore& store, const BranchTrace& trace,
                                          double momentum) const {
    if (trace.mode != Mode::train) return;
    for (const char* bn : {"bn1.", "bn2."}) {
        const BatchNormResult& r = std::string_view(bn) == "bn1." ? trace.bn1 : trace.bn2;
        Tensor& updates = store.value(prefix_ + bn + "updates");
        // Early on, fall back to a cumulative average so the initial (0, 1)
        // statistics wash out quickly.
        const double m = std::max(momentum, 1.0 / (updates[0] + 1.0));
        update_running_stats(store.value(prefix_ + bn + "running_mean").values(),
                             store.value(prefix_ + bn + "running_var").values(), r, m);
        updates[0] += 1.0;
    }
}

Tensor ConvLSTMBranch::forward_sequence(const ParamStore& store, const Tensor& sequence, Mode mode,
                                        Rng& rng) const {
    Shape batched{1};
    batched.insert(batched.end(), sequence.shape().begin(), sequence.shape().end());
    Tensor out = forward(store, sequence.reshaped(batched), mode, rng);
    return out.reshaped(sequence.shape());
}

Tensor ConvLSTMBranch::predict(const ParamStore& store, const Tensor& sequence, Mode mode,
                               Rng& rng) const {
    Tensor out = forward_sequence(store, sequence, mode, rng);
    const auto last = out.slab(out.dim(0) - 1);
    return Tensor(Shape{1, cfg_.rows, cfg_.cols}, std::vector<double>(last.begin(), last.end()));
}

Tensor ConvLSTMBranch::last_frame(const Tensor& outputs) {
    const std::size_t B = outputs.dim(0), T = outputs.dim(1), R = outputs.dim(3), C = outputs.dim(4);
    Tensor out(Shape{B, 1, R, C});
    for (std::size_t b = 0; b < B; ++b) {
        std::copy_n(outputs.data() + (b * T + (T - 1)) * R * C, R * C, out.data() + b * R * C);
    }
    return out;
}

}  // namespace stcl
