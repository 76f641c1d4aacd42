#pragma once

#include "stcl/rng.hpp"
#include "stcl/tensor.hpp"

#include <span>
#include <vector>

namespace stcl {

enum class Mode { train, infer };

inline constexpr double kBatchNormEps = 1e-5;

// Pointwise scalar helpers shared by the recurrent cells.
double sigmoid(double x);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);

// Adjoints. `out` is the forward output, `input` the forward input.
Tensor sigmoid_backward(const Tensor& out, const Tensor& grad);
Tensor tanh_backward(const Tensor& out, const Tensor& grad);
Tensor relu_backward(const Tensor& input, const Tensor& grad);

// Batch normalization over every axis except `channel_axis`.
//
// Train mode normalizes with the batch mean and population variance of each
// channel (eps inside the square root), then applies y = gamma * x_hat + beta.
// Infer mode uses the running statistics instead and rejects a view that has
// never been updated.
struct RunningStatsView {
    std::span<const double> mean;
    std::span<const double> var;
    double updates = 0;
};

struct BatchNormResult {
    Tensor output;
    Tensor normalized;
    std::vector<double> batch_mean;
    std::vector<double> batch_var;
    std::vector<double> inv_std;
    std::size_t channel_axis = 0;
    Mode mode = Mode::train;
};

BatchNormResult batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                           const RunningStatsView& running, Mode mode,
                           std::size_t channel_axis, double eps = kBatchNormEps);

struct BatchNormGrads {
    Tensor input;
    Tensor gamma;
    Tensor beta;
};

BatchNormGrads batch_norm_backward(const BatchNormResult& fwd, const Tensor& gamma,
                                   const Tensor& grad_out);

// Exponential moving average: running = (1 - momentum) * running + momentum * batch.
void update_running_stats(std::span<double> running_mean, std::span<double> running_var,
                          const BatchNormResult& fwd, double momentum);

// Inverted dropout. `mask` holds 1 for kept entries and 0 for dropped ones;
// kept entries are scaled by 1 / (1 - rate). Infer mode and rate 0 are exact
// identities and consume no random draws.
struct DropoutResult {
    Tensor output;
    Tensor mask;
    double scale = 1.0;
};

DropoutResult dropout(const Tensor& input, double rate, Rng& rng, Mode mode);
Tensor dropout_backward(const DropoutResult& fwd, const Tensor& grad);

}  // namespace stcl
