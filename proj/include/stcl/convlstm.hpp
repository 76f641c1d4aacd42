#pragma once

#include "stcl/ops.hpp"
#include "stcl/param_store.hpp"
#include "stcl/rng.hpp"
#include "stcl/tensor.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace stcl {

struct ConvLSTMCellConfig {
    std::size_t input_channels = 1;
    std::size_t hidden_channels = 16;
    std::size_t kernel_h = 3;
    std::size_t kernel_w = 3;

    void validate() const;
};

struct ConvLSTMState {
    Tensor h;  // [hidden, rows, cols], or [B, hidden, rows, cols] for a batch
    Tensor c;

    static ConvLSTMState zeros(const ConvLSTMCellConfig& cfg, std::size_t rows, std::size_t cols);
};

// Parameters of one cell, registered under `prefix`:
//   wx  [4h, C_in, kh, kw]   input-to-state kernels
//   wh  [4h, h, kh, kw]      state-to-state kernels
//   b   [4h]
//   wci, wcf, wco [h, rows, cols]  peephole weights (Hadamard)
// The 4h axis holds the input, forget, candidate and output blocks in that order.
void init_convlstm_params(ParamStore& store, const std::string& prefix,
                          const ConvLSTMCellConfig& cfg, std::size_t rows, std::size_t cols,
                          Rng& rng);

struct ConvLSTMWeights {
    const Tensor* wx;
    const Tensor* wh;
    const Tensor* b;
    const Tensor* wci;
    const Tensor* wcf;
    const Tensor* wco;

    static ConvLSTMWeights from(const ParamStore& store, const std::string& prefix);
};

struct ConvLSTMGradRefs {
    Tensor* wx;
    Tensor* wh;
    Tensor* b;
    Tensor* wci;
    Tensor* wcf;
    Tensor* wco;

    static ConvLSTMGradRefs from(ParamStore& store, const std::string& prefix);
};

// Intermediates of one step, kept for the backward pass.
struct CellTrace {
    std::vector<double> x_cols;
    std::vector<double> h_cols;  // empty when the previous hidden state was zero
    Tensor c_prev, i, f, g, o, c, tanh_c;
};

// One ConvLSTM step:
//   i = sig(Wxi*X + Whi*H + Wci.C_prev + b_i)
//   f = sig(Wxf*X + Whf*H + Wcf.C_prev + b_f)
//   C = f.C_prev + i.tanh(Wxc*X + Whc*H + b_c)
//   o = sig(Wxo*X + Who*H + Wco.C + b_o)
//   H = o.tanh(C)
// where * is same-size convolution and . the Hadamard product.
ConvLSTMState cell_step(const ConvLSTMCellConfig& cfg, const ConvLSTMWeights& w, const Tensor& x,
                        const ConvLSTMState& prev, CellTrace* trace = nullptr);

struct CellStepGrads {
    Tensor x;  // empty unless requested
    Tensor h_prev;
    Tensor c_prev;
};

// Adjoint of cell_step. grad_h / grad_c are dL/dH_t and dL/dC_t arriving from
// later steps or layers; parameter gradients are accumulated into `grads`.
CellStepGrads cell_step_backward(const ConvLSTMCellConfig& cfg, const ConvLSTMWeights& w,
                                 const CellTrace& trace, const Tensor& grad_h,
                                 const Tensor& grad_c, const ConvLSTMGradRefs& grads,
                                 bool need_input_grad);

// Unrolled layer over a [T, C_in, rows, cols] sequence from a zero state.
// Returns the hidden states [T, h, rows, cols]. A [T, B, C_in, rows, cols]
// input runs B independent sequences at once.
Tensor convlstm_sequence(const ConvLSTMCellConfig& cfg, const ConvLSTMWeights& w,
                         const Tensor& inputs, std::vector<CellTrace>* trace = nullptr);

// Backpropagation through time. Returns dL/dinputs when requested, else an
// empty tensor.
Tensor convlstm_sequence_backward(const ConvLSTMCellConfig& cfg, const ConvLSTMWeights& w,
                                  const std::vector<CellTrace>& trace, const Tensor& grad_hidden,
                                  const ConvLSTMGradRefs& grads, bool need_input_grad);

// ---------------------------------------------------------------------------
// Single-branch encoder-forecaster network:
//   ConvLSTM -> batch norm -> dropout -> ConvLSTM -> batch norm -> dropout
//   -> stack hidden states over time -> conv3d -> relu
// The output is a sequence as long as the input; its last frame is the
// one-step-ahead prediction.

struct BranchConfig {
    std::size_t seq_len = 3;
    std::size_t rows = 8;
    std::size_t cols = 8;
    std::size_t hidden = 16;
    std::size_t kernel = 3;
    double dropout = 0.13;
    std::size_t output_kt = 5;
    std::size_t output_kernel = 3;

    void validate() const;
    // Temporal extent of the output conv3d: the largest odd number not above
    // min(output_kt, seq_len).
    std::size_t effective_kt() const;
    ConvLSTMCellConfig layer_config(std::size_t layer) const;
};

struct BranchTrace {
    Mode mode = Mode::train;
    std::size_t batch = 0;
    std::vector<CellTrace> layer1, layer2;  // per step, batched
    BatchNormResult bn1, bn2;
    DropoutResult drop1, drop2;
    std::vector<Tensor> head_inputs;  // per sample [h, T, rows, cols]
    Tensor head_pre;                  // [B, T, 1, rows, cols] before relu
    bool valid = false;
};

class ConvLSTMBranch {
public:
    ConvLSTMBranch(BranchConfig cfg, std::string prefix);

    const BranchConfig& config() const { return cfg_; }
    const std::string& prefix() const { return prefix_; }

    void init_params(ParamStore& store, Rng& rng) const;

    // inputs [B, T, 1, rows, cols] -> outputs [B, T, 1, rows, cols].
    Tensor forward(const ParamStore& store, const Tensor& inputs, Mode mode, Rng& rng,
                   BranchTrace* trace = nullptr) const;

    // Accumulates parameter gradients for dL/doutputs = grad_out.
    void backward(ParamStore& store, const BranchTrace& trace, const Tensor& grad_out) const;

    // Folds the batch statistics of a train-mode pass into the running stats.
    void commit_running_stats(ParamStore& store, const BranchTrace& trace, double momentum) const;

    // Single-sequence conveniences: [T, 1, rows, cols] in, same out / last frame.
    Tensor forward_sequence(const ParamStore& store, const Tensor& sequence, Mode mode,
                            Rng& rng) const;
    Tensor predict(const ParamStore& store, const Tensor& sequence, Mode mode, Rng& rng) const;

    // [B, T, 1, rows, cols] -> [B, 1, rows, cols]
    static Tensor last_frame(const Tensor& outputs);

private:
    std::string name(const char* suffix) const { return prefix_ + suffix; }

    BranchConfig cfg_;
    std::string prefix_;
};

}  // namespace stcl
