#include "stcl/conv.hpp"

#include "stcl/errors.hpp"

#include <Eigen/Core>

#include <string>

namespace stcl {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void check_odd(const KernelExtent& k) {
    if (k.depth % 2 == 0 || k.height % 2 == 0 || k.width % 2 == 0) {
        throw ShapeError("convolution kernel extents must be odd");
    }
}

struct ConvProblem {
    Volume vol;
    KernelExtent k;
    std::size_t out_channels;
};

// Shapes of a 3-D problem. 2-D callers pass depth-1 views.
ConvProblem validate(const Shape& in, const Shape& ker, const Tensor& bias, const char* op) {
    if (in.size() != 4 || ker.size() != 5) {
        throw ShapeError(std::string(op) + ": bad input/kernel rank");
    }
    if (ker[1] != in[0]) {
        throw ShapeError(std::string(op) + ": kernel expects " + std::to_string(ker[1]) +
                         " input channels, input has " + std::to_string(in[0]));
    }
    if (bias.rank() != 1 || bias.dim(0) != ker[0]) {
        throw ShapeError(std::string(op) + ": bias must have one entry per output channel");
    }
    ConvProblem p{{in[0], in[1], in[2], in[3]}, {ker[2], ker[3], ker[4]}, ker[0]};
    check_odd(p.k);
    return p;
}

Tensor conv_forward(const Tensor& input, const ConvProblem& p, const Tensor& kernel,
                    const Tensor& bias, Shape out_shape) {
    const std::size_t inner = p.vol.channels * p.k.taps();
    const std::size_t n = p.vol.positions();
    std::vector<double> cols(inner * n);
    im2col(input.values(), p.vol, p.k, cols);
    Tensor out(std::move(out_shape));
    for (std::size_t co = 0; co < p.out_channels; ++co) {
        std::fill_n(out.data() + co * n, n, bias[co]);
    }
    matmul_add(kernel.values(), cols, out.values(), p.out_channels, inner, n);
    return out;
}

ConvGrads conv_backward(const Tensor& input, const ConvProblem& p, const Tensor& kernel,
                        const Tensor& grad_out) {
    const std::size_t inner = p.vol.channels * p.k.taps();
    const std::size_t n = p.vol.positions();
    if (grad_out.size() != p.out_channels * n) {
        throw ShapeError("conv backward: upstream gradient has wrong size");
    }
    std::vector<double> cols(inner * n);
    im2col(input.values(), p.vol, p.k, cols);

    ConvGrads g{Tensor::zeros_like(input), Tensor::zeros_like(kernel),
                Tensor(Shape{p.out_channels})};
    for (std::size_t co = 0; co < p.out_channels; ++co) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += grad_out[co * n + j];
        g.bias[co] = s;
    }
    matmul_add_bt(grad_out.values(), cols, g.kernel.values(), p.out_channels, inner, n);
    std::vector<double> cols_grad(inner * n);
    matmul_at(kernel.values(), grad_out.values(), cols_grad, p.out_channels, inner, n);
    col2im_add(cols_grad, p.vol, p.k, g.input.values());
    return g;
}

}  // namespace

void im2col(std::span<const double> input, const Volume& vol, const KernelExtent& k,
            std::span<double> cols, std::size_t row_stride) {
    const std::size_t n = vol.positions();
    const std::size_t ld = row_stride ? row_stride : n;
    const auto pd = static_cast<std::ptrdiff_t>(k.depth / 2);
    const auto ph = static_cast<std::ptrdiff_t>(k.height / 2);
    const auto pw = static_cast<std::ptrdiff_t>(k.width / 2);
    const auto D = static_cast<std::ptrdiff_t>(vol.depth);
    const auto H = static_cast<std::ptrdiff_t>(vol.height);
    const auto W = static_cast<std::ptrdiff_t>(vol.width);

    std::size_t row = 0;
    for (std::size_t c = 0; c < vol.channels; ++c) {
        const double* plane = input.data() + c * n;
        for (std::ptrdiff_t kd = 0; kd < static_cast<std::ptrdiff_t>(k.depth); ++kd) {
            for (std::ptrdiff_t kh = 0; kh < static_cast<std::ptrdiff_t>(k.height); ++kh) {
                for (std::ptrdiff_t kw = 0; kw < static_cast<std::ptrdiff_t>(k.width); ++kw, ++row) {
                    double* dst = cols.data() + row * ld;
                    const std::ptrdiff_t od = kd - pd, oh = kh - ph, ow = kw - pw;
                    for (std::ptrdiff_t d = 0; d < D; ++d) {
                        const std::ptrdiff_t sd = d + od;
                        for (std::ptrdiff_t y = 0; y < H; ++y) {
                            const std::ptrdiff_t sy = y + oh;
                            double* out = dst + (d * H + y) * W;
                            if (sd < 0 || sd >= D || sy < 0 || sy >= H) {
                                std::fill_n(out, W, 0.0);
                                continue;
                            }
                            const double* src = plane + (sd * H + sy) * W;
                            for (std::ptrdiff_t x = 0; x < W; ++x) {
                                const std::ptrdiff_t sx = x + ow;
                                out[x] = (sx >= 0 && sx < W) ? src[sx] : 0.0;
                            }
                        }
                    }
                }
            }
        }
    }
}

void col2im_add(std::span<const double> cols, const Volume& vol, const KernelExtent& k,
                std::span<double> input_grad, std::size_t row_stride) {
    const std::size_t n = vol.positions();
    const std::size_t ld = row_stride ? row_stride : n;
    const auto pd = static_cast<std::ptrdiff_t>(k.depth / 2);
    const auto ph = static_cast<std::ptrdiff_t>(k.height / 2);
    const auto pw = static_cast<std::ptrdiff_t>(k.width / 2);
    const auto D = static_cast<std::ptrdiff_t>(vol.depth);
    const auto H = static_cast<std::ptrdiff_t>(vol.height);
    const auto W = static_cast<std::ptrdiff_t>(vol.width);

    std::size_t row = 0;
    for (std::size_t c = 0; c < vol.channels; ++c) {
        double* plane = input_grad.data() + c * n;
        for (std::ptrdiff_t kd = 0; kd < static_cast<std::ptrdiff_t>(k.depth); ++kd) {
            for (std::ptrdiff_t kh = 0; kh < static_cast<std::ptrdiff_t>(k.height); ++kh) {
                for (std::ptrdiff_t kw = 0; kw < static_cast<std::ptrdiff_t>(k.width); ++kw, ++row) {
                    const double* src = cols.data() + row * ld;
                    const std::ptrdiff_t od = kd - pd, oh = kh - ph, ow = kw - pw;
                    for (std::ptrdiff_t d = 0; d < D; ++d) {
                        const std::ptrdiff_t sd = d + od;
                        if (sd < 0 || sd >= D) continue;
                        for (std::ptrdiff_t y = 0; y < H; ++y) {
                            const std::ptrdiff_t sy = y + oh;
                            if (sy < 0 || sy >= H) continue;
                            const double* in = src + (d * H + y) * W;
                            double* dst = plane + (sd * H + sy) * W;
                            for (std::ptrdiff_t x = 0; x < W; ++x) {
                                const std::ptrdiff_t sx = x + ow;
                                if (sx >= 0 && sx < W) dst[sx] += in[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

void matmul_add(std::span<const double> weights, std::span<const double> cols,
                std::span<double> out, std::size_t rows, std::size_t inner, std::size_t n) {
    const auto r = static_cast<Eigen::Index>(rows), i = static_cast<Eigen::Index>(inner),
               c = static_cast<Eigen::Index>(n);
    MutMap(out.data(), r, c).noalias() += ConstMap(weights.data(), r, i) * ConstMap(cols.data(), i, c);
}

void matmul_add_bt(std::span<const double> grad_out, std::span<const double> cols,
                   std::span<double> weight_grad, std::size_t rows, std::size_t inner,
                   std::size_t n) {
    const auto r = static_cast<Eigen::Index>(rows), i = static_cast<Eigen::Index>(inner),
               c = static_cast<Eigen::Index>(n);
    MutMap(weight_grad.data(), r, i).noalias() +=
        ConstMap(grad_out.data(), r, c) * ConstMap(cols.data(), i, c).transpose();
}

void matmul_at(std::span<const double> weights, std::span<const double> grad_out,
               std::span<double> cols_grad, std::size_t rows, std::size_t inner, std::size_t n) {
    const auto r = static_cast<Eigen::Index>(rows), i = static_cast<Eigen::Index>(inner),
               c = static_cast<Eigen::Index>(n);
    MutMap(cols_grad.data(), i, c).noalias() =
        ConstMap(weights.data(), r, i).transpose() * ConstMap(grad_out.data(), r, c);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
    if (input.rank() != 3 || kernel.rank() != 4) throw ShapeError("conv2d: bad input/kernel rank");
    const auto& in = input.shape();
    const auto& ker = kernel.shape();
    const auto p = validate({in[0], 1, in[1], in[2]}, {ker[0], ker[1], 1, ker[2], ker[3]}, bias,
                            "conv2d");
    return conv_forward(input, p, kernel, bias, {p.out_channels, in[1], in[2]});
}

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
    const auto p = validate(input.shape(), kernel.shape(), bias, "conv3d");
    const auto& in = input.shape();
    return conv_forward(input, p, kernel, bias, {p.out_channels, in[1], in[2], in[3]});
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out) {
    if (input.rank() != 3 || kernel.rank() != 4) throw ShapeError("conv2d: bad input/kernel rank");
    const auto& in = input.shape();
    const auto& ker = kernel.shape();
    const auto p = validate({in[0], 1, in[1], in[2]}, {ker[0], ker[1], 1, ker[2], ker[3]},
                            Tensor(Shape{ker[0]}), "conv2d");
    return conv_backward(input, p, kernel, grad_out);
}

ConvGrads conv3d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out) {
    const auto p = validate(input.shape(), kernel.shape(), Tensor(Shape{kernel.dim(0)}), "conv3d");
    return conv_backward(input, p, kernel, grad_out);
}

}  // namespace stcl
