#pragma once

#include "stcl/convlstm.hpp"
#include "stcl/forecaster.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stcl {

enum class BranchKind { closeness, period, trend };

std::string branch_name(BranchKind kind);

struct SamplingConfig {
    std::size_t closeness_len = 3;
    std::size_t period_len = 3;
    std::size_t trend_len = 3;
    std::size_t period_stride = 24;
    std::size_t trend_stride = 168;

    void validate() const;
    std::size_t length(BranchKind kind) const;
    std::size_t stride(BranchKind kind) const;  // 1 for closeness
    // Furthest lookback over all three branches.
    std::size_t deepest() const;
};

// Time indices feeding one branch for target t, oldest first:
// t - len*stride, ..., t - 2*stride, t - stride.
std::vector<std::size_t> branch_indices(std::size_t t, BranchKind kind, const SamplingConfig& cfg);

struct TrainingSample {
    std::size_t target = 0;
    std::vector<std::size_t> closeness;
    std::vector<std::size_t> period;
    std::vector<std::size_t> trend;
};

TrainingSample make_sample(std::size_t t, const SamplingConfig& cfg);

// One sample per t in [deepest, series_length). Empty (with a warning on
// stderr) when the series is too short.
std::vector<TrainingSample> build_samples(std::size_t series_length, const SamplingConfig& cfg);
std::vector<TrainingSample> build_samples(const DemandSeries& series, const SamplingConfig& cfg);

// wc.oc + wp.op + wt.ot, elementwise; all five shapes must agree.
Tensor fuse(const Tensor& out_c, const Tensor& out_p, const Tensor& out_t, const Tensor& wc,
            const Tensor& wp, const Tensor& wt);

struct NetworkConfig {
    std::size_t hidden = 16;
    std::size_t kernel = 3;
    double dropout = 0.13;
    std::size_t output_kt = 5;
    double bn_momentum = 0.1;

    void validate() const;
};

// Either the full three-branch model with elementwise fusion, or a single
// branch whose last output frame is the prediction.
class DeepSTCL : public TrainableForecaster {
public:
    DeepSTCL(std::size_t rows, std::size_t cols, SamplingConfig sampling, NetworkConfig network,
             std::vector<BranchKind> branches, std::uint64_t init_seed);

    static DeepSTCL fused(std::size_t rows, std::size_t cols, const SamplingConfig& sampling,
                          const NetworkConfig& network, std::uint64_t init_seed);
    static DeepSTCL single(BranchKind kind, std::size_t rows, std::size_t cols,
                           const SamplingConfig& sampling, const NetworkConfig& network,
                           std::uint64_t init_seed);

    std::string kind() const override;
    std::size_t min_history() const override;

    bool is_fused() const { return kinds_.size() == 3; }
    const std::vector<BranchKind>& branch_kinds() const { return kinds_; }
    const std::vector<ConvLSTMBranch>& branches() const { return branches_; }
    const SamplingConfig& sampling() const { return sampling_; }
    const NetworkConfig& network() const { return network_; }

    struct Trace {
        std::vector<BranchTrace> branches;
        std::vector<Tensor> last;  // per branch [B, 1, rows, cols]
        bool valid = false;
    };

    // Scaled inputs for each active branch, [B, len, 1, rows, cols].
    std::vector<Tensor> assemble_inputs(const DemandSeries& series,
                                        std::span<const std::size_t> targets) const;

    // Prediction [B, rows, cols] from assembled inputs.
    Tensor forward(const std::vector<Tensor>& inputs, Mode mode, Rng& rng,
                   Trace* trace = nullptr) const;
    void backward(const Trace& trace, const Tensor& grad_pred);
    void commit_running_stats(const Trace& trace);

    double train_batch(const DemandSeries& series, std::span<const std::size_t> targets,
                       Rng& rng) override;

protected:
    Tensor predict_scaled(const DemandSeries& series,
                          std::span<const std::size_t> targets) const override;

private:
    SamplingConfig sampling_;
    NetworkConfig network_;
    std::vector<BranchKind> kinds_;
    std::vector<ConvLSTMBranch> branches_;
};

}  // namespace stcl
