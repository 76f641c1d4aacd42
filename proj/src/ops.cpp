#include "stcl/ops.hpp"

#include "stcl/errors.hpp"

#include <cmath>
#include <string>

namespace stcl {

namespace {

template <typename F>
Tensor map(const Tensor& x, F f) {
    Tensor out = Tensor::zeros_like(x);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return out;
}

struct ChannelLayout {
    std::size_t outer;
    std::size_t channels;
    std::size_t inner;
};

ChannelLayout layout_of(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) throw ShapeError("batch_norm: channel axis out of range");
    ChannelLayout l{1, shape[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
    return l;
}

}  // namespace

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) { return map(x, [](double v) { return sigmoid(v); }); }
Tensor tanh(const Tensor& x) { return map(x, [](double v) { return std::tanh(v); }); }
Tensor relu(const Tensor& x) { return map(x, [](double v) { return v > 0.0 ? v : 0.0; }); }

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor out = Tensor::zeros_like(a);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = Tensor::zeros_like(a);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Tensor sigmoid_backward(const Tensor& out, const Tensor& grad) {
    require_same_shape(out, grad, "sigmoid_backward");
    Tensor g = Tensor::zeros_like(out);
    for (std::size_t i = 0; i < out.size(); ++i) g[i] = grad[i] * out[i] * (1.0 - out[i]);
    return g;
}

Tensor tanh_backward(const Tensor& out, const Tensor& grad) {
    require_same_shape(out, grad, "tanh_backward");
    Tensor g = Tensor::zeros_like(out);
    for (std::size_t i = 0; i < out.size(); ++i) g[i] = grad[i] * (1.0 - out[i] * out[i]);
    return g;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad) {
    require_same_shape(input, grad, "relu_backward");
    Tensor g = Tensor::zeros_like(input);
    for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > 0.0 ? grad[i] : 0.0;
    return g;
}

BatchNormResult batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                           const RunningStatsView& running, Mode mode,
                           std::size_t channel_axis, double eps) {
    const ChannelLayout l = layout_of(input.shape(), channel_axis);
    if (gamma.size() != l.channels || beta.size() != l.channels) {
        throw ShapeError("batch_norm: gamma/beta need " + std::to_string(l.channels) +
                         " entries, got " + std::to_string(gamma.size()) + "/" +
                         std::to_string(beta.size()));
    }

    BatchNormResult r;
    r.channel_axis = channel_axis;
    r.mode = mode;
    r.output = Tensor::zeros_like(input);
    r.normalized = Tensor::zeros_like(input);
    r.batch_mean.assign(l.channels, 0.0);
    r.batch_var.assign(l.channels, 0.0);
    r.inv_std.assign(l.channels, 0.0);

    const double count = static_cast<double>(l.outer * l.inner);
    if (mode == Mode::train) {
        for (std::size_t o = 0; o < l.outer; ++o) {
            for (std::size_t c = 0; c < l.channels; ++c) {
                const double* p = input.data() + (o * l.channels + c) * l.inner;
                for (std::size_t i = 0; i < l.inner; ++i) r.batch_mean[c] += p[i];
            }
        }
        for (double& m : r.batch_mean) m /= count;
        for (std::size_t o = 0; o < l.outer; ++o) {
            for (std::size_t c = 0; c < l.channels; ++c) {
                const double* p = input.data() + (o * l.channels + c) * l.inner;
                for (std::size_t i = 0; i < l.inner; ++i) {
                    const double d = p[i] - r.batch_mean[c];
                    r.batch_var[c] += d * d;
                }
            }
        }
        for (double& v : r.batch_var) v /= count;
    } else {
        if (running.updates <= 0 || running.mean.size() != l.channels ||
            running.var.size() != l.channels) {
            throw DataError("batch_norm: inference requested before any running statistics were "
                            "accumulated");
        }
        r.batch_mean.assign(running.mean.begin(), running.mean.end());
        r.batch_var.assign(running.var.begin(), running.var.end());
    }
    for (std::size_t c = 0; c < l.channels; ++c) r.inv_std[c] = 1.0 / std::sqrt(r.batch_var[c] + eps);

    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t c = 0; c < l.channels; ++c) {
            const std::size_t base = (o * l.channels + c) * l.inner;
            for (std::size_t i = 0; i < l.inner; ++i) {
                const double xh = (input[base + i] - r.batch_mean[c]) * r.inv_std[c];
                r.normalized[base + i] = xh;
                r.output[base + i] = gamma[c] * xh + beta[c];
            }
        }
    }
    return r;
}

BatchNormGrads batch_norm_backward(const BatchNormResult& fwd, const Tensor& gamma,
                                   const Tensor& grad_out) {
    require_same_shape(fwd.normalized, grad_out, "batch_norm_backward");
    const ChannelLayout l = layout_of(grad_out.shape(), fwd.channel_axis);
    BatchNormGrads g{Tensor::zeros_like(grad_out), Tensor(Shape{l.channels}),
                     Tensor(Shape{l.channels})};

    std::vector<double> sum_dxhat(l.channels, 0.0), sum_dxhat_xhat(l.channels, 0.0);
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t c = 0; c < l.channels; ++c) {
            const std::size_t base = (o * l.channels + c) * l.inner;
            for (std::size_t i = 0; i < l.inner; ++i) {
                const double dy = grad_out[base + i];
                const double xh = fwd.normalized[base + i];
                g.gamma[c] += dy * xh;
                g.beta[c] += dy;
                sum_dxhat[c] += dy * gamma[c];
                sum_dxhat_xhat[c] += dy * gamma[c] * xh;
            }
        }
    }

    const double count = static_cast<double>(l.outer * l.inner);
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t c = 0; c < l.channels; ++c) {
            const std::size_t base = (o * l.channels + c) * l.inner;
            for (std::size_t i = 0; i < l.inner; ++i) {
                const double dxhat = grad_out[base + i] * gamma[c];
                if (fwd.mode == Mode::train) {
                    const double xh = fwd.normalized[base + i];
                    g.input[base + i] = fwd.inv_std[c] / count *
                                        (count * dxhat - sum_dxhat[c] - xh * sum_dxhat_xhat[c]);
                } else {
                    g.input[base + i] = dxhat * fwd.inv_std[c];
                }
            }
        }
    }
    return g;
}

void update_running_stats(std::span<double> running_mean, std::span<double> running_var,
                          const BatchNormResult& fwd, double momentum) {
    if (running_mean.size() != fwd.batch_mean.size() || running_var.size() != fwd.batch_var.size()) {
        throw ShapeError("update_running_stats: channel count mismatch");
    }
    for (std::size_t c = 0; c < running_mean.size(); ++c) {
        running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * fwd.batch_mean[c];
        running_var[c] = (1.0 - momentum) * running_var[c] + momentum * fwd.batch_var[c];
    }
}

DropoutResult dropout(const Tensor& input, double rate, Rng& rng, Mode mode) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw std::invalid_argument("dropout: rate must lie in [0, 1)");
    }
    DropoutResult r{input, Tensor(input.shape(), 1.0), 1.0};
    if (mode == Mode::infer || rate == 0.0) return r;
    r.scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < input.size(); ++i) {
        const bool keep = rng.uniform() >= rate;
        r.mask[i] = keep ? 1.0 : 0.0;
        r.output[i] = keep ? input[i] * r.scale : 0.0;
    }
    return r;
}

Tensor dropout_backward(const DropoutResult& fwd, const Tensor& grad) {
    require_same_shape(fwd.mask, grad, "dropout_backward");
    Tensor g = Tensor::zeros_like(grad);
    for (std::size_t i = 0; i < grad.size(); ++i) g[i] = grad[i] * fwd.mask[i] * fwd.scale;
    return g;
}

}  // namespace stcl
