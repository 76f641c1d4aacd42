#pragma once

#include "stcl/tensor.hpp"

#include <cstddef>
#include <span>

namespace stcl {

// Same-size, stride-1, zero-padded cross-correlation. 2-D convolution is the
// depth == 1 special case of the volume routines below.

struct Volume {
    std::size_t channels = 1;
    std::size_t depth = 1;
    std::size_t height = 1;
    std::size_t width = 1;

    std::size_t positions() const { return depth * height * width; }
    std::size_t size() const { return channels * positions(); }
};

struct KernelExtent {
    std::size_t depth = 1;
    std::size_t height = 1;
    std::size_t width = 1;

    std::size_t taps() const { return depth * height * width; }
};

// Unfold `input` (channels x depth x height x width) into a row-major
// [channels * taps, positions] patch matrix. Rows are `row_stride` apart
// (default: positions), so several samples can share one wide matrix.
void im2col(std::span<const double> input, const Volume& vol, const KernelExtent& k,
            std::span<double> cols, std::size_t row_stride = 0);

// Adjoint of im2col: fold a patch matrix back, accumulating into `input_grad`.
void col2im_add(std::span<const double> cols, const Volume& vol, const KernelExtent& k,
                std::span<double> input_grad, std::size_t row_stride = 0);

// out[rows, n] (+)= weights[rows, inner] * cols[inner, n]
void matmul_add(std::span<const double> weights, std::span<const double> cols,
                std::span<double> out, std::size_t rows, std::size_t inner, std::size_t n);
// weight_grad[rows, inner] += grad_out[rows, n] * cols[inner, n]^T
void matmul_add_bt(std::span<const double> grad_out, std::span<const double> cols,
                   std::span<double> weight_grad, std::size_t rows, std::size_t inner,
                   std::size_t n);
// cols_grad[inner, n] = weights[rows, inner]^T * grad_out[rows, n]
void matmul_at(std::span<const double> weights, std::span<const double> grad_out,
               std::span<double> cols_grad, std::size_t rows, std::size_t inner, std::size_t n);

// input [C_in, H, W], kernel [C_out, C_in, kh, kw], bias [C_out] -> [C_out, H, W]
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias);

// input [C_in, T, H, W], kernel [C_out, C_in, kt, kh, kw], bias [C_out] -> [C_out, T, H, W]
Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias);

struct ConvGrads {
    Tensor input;
    Tensor kernel;
    Tensor bias;
};

ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out);
ConvGrads conv3d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out);

}  // namespace stcl
