#include "stcl/deepstcl.hpp"

#include "stcl/errors.hpp"

#include <algorithm>
#include <iostream>
#include <stdexcept>

namespace stcl {

std::string branch_name(BranchKind kind) {
    switch (kind) {
        case BranchKind::closeness: return "closeness";
        case BranchKind::period: return "period";
        case BranchKind::trend: return "trend";
    }
    throw InvariantError("unknown branch kind");
}

void SamplingConfig::validate() const {
    if (closeness_len == 0 || period_len == 0 || trend_len == 0)
        throw std::invalid_argument("branch lengths must be positive");
    if (period_stride == 0 || trend_stride == 0)
        throw std::invalid_argument("period and trend strides must be at least 1");
}

std::size_t SamplingConfig::length(BranchKind kind) const {
    switch (kind) {
        case BranchKind::closeness: return closeness_len;
        case BranchKind::period: return period_len;
        case BranchKind::trend: return trend_len;
    }
    throw InvariantError("unknown branch kind");
}

std::size_t SamplingConfig::stride(BranchKind kind) const {
    switch (kind) {
        case BranchKind::closeness: return 1;
        case BranchKind::period: return period_stride;
        case BranchKind::trend: return trend_stride;
    }
    throw InvariantError("unknown branch kind");
}

std::size_t SamplingConfig::deepest() const {
    return std::max({closeness_len, period_len * period_stride, trend_len * trend_stride});
}

std::vector<std::size_t> branch_indices(std::size_t t, BranchKind kind, const SamplingConfig& cfg) {
    const std::size_t len = cfg.length(kind);
    const std::size_t stride = cfg.stride(kind);
    if (t < len * stride) {
        throw DataError(branch_name(kind) + " branch needs " + std::to_string(len * stride) +
                        " buckets of history before target " + std::to_string(t));
    }
    std::vector<std::size_t> out(len);
    for (std::size_t j = 0; j < len; ++j) out[j] = t - (len - j) * stride;
    return out;
}

TrainingSample make_sample(std::size_t t, const SamplingConfig& cfg) {
    return TrainingSample{t, branch_indices(t, BranchKind::closeness, cfg),
                          branch_indices(t, BranchKind::period, cfg),
                          branch_indices(t, BranchKind::trend, cfg)};
}

std::vector<TrainingSample> build_samples(std::size_t series_length, const SamplingConfig& cfg) {
    cfg.validate();
    const std::size_t first = cfg.deepest();
    std::vector<TrainingSample> out;
    if (series_length <= first) {
        std::cerr << "warning: series of length " << series_length
                  << " is too short for sampling depth " << first << "; no samples\n";
        return out;
    }
    out.reserve(series_length - first);
    for (std::size_t t = first; t < series_length; ++t) out.push_back(make_sample(t, cfg));
    return out;
}

std::vector<TrainingSample> build_samples(const DemandSeries& series, const SamplingConfig& cfg) {
    return build_samples(series.size(), cfg);
}

Tensor fuse(const Tensor& out_c, const Tensor& out_p, const Tensor& out_t, const Tensor& wc,
            const Tensor& wp, const Tensor& wt) {
    require_same_shape(out_c, out_p, "fuse");
    require_same_shape(out_c, out_t, "fuse");
    require_same_shape(out_c, wc, "fuse");
    require_same_shape(out_c, wp, "fuse");
    require_same_shape(out_c, wt, "fuse");
    Tensor out = Tensor::zeros_like(out_c);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = wc[i] * out_c[i] + wp[i] * out_p[i] + wt[i] * out_t[i];
    return out;
}

void NetworkConfig::validate() const {
    if (hidden == 0) throw std::invalid_argument("hidden channels must be positive");
    if (kernel % 2 == 0) throw std::invalid_argument("kernel size must be odd");
    if (output_kt == 0) throw std::invalid_argument("output temporal extent must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
    if (!(bn_momentum > 0.0 && bn_momentum <= 1.0))
        throw std::invalid_argument("batch-norm momentum must lie in (0, 1]");
}

namespace {

const char* fusion_name(BranchKind kind) {
    switch (kind) {
        case BranchKind::closeness: return "fusion.wc";
        case BranchKind::period: return "fusion.wp";
        case BranchKind::trend: return "fusion.wt";
    }
    throw InvariantError("unknown branch kind");
}

}  // namespace

DeepSTCL::DeepSTCL(std::size_t rows, std::size_t cols, SamplingConfig sampling,
                   NetworkConfig network, std::vector<BranchKind> branches, std::uint64_t init_seed)
    : TrainableForecaster(rows, cols),
      sampling_(sampling),
      network_(network),
      kinds_(std::move(branches)) {
    sampling_.validate();
    network_.validate();
    if (kinds_.size() != 1 && kinds_.size() != 3)
        throw std::invalid_argument("model needs one branch or all three");
    if (kinds_.size() == 3) {
        std::vector<BranchKind> sorted = kinds_;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw std::invalid_argument("duplicate branch kinds");
    }
    Rng root(init_seed);
    for (BranchKind k : kinds_) {
        BranchConfig bc;
        bc.seq_len = sampling_.length(k);
        bc.rows = rows;
        bc.cols = cols;
        bc.hidden = network_.hidden;
        bc.kernel = network_.kernel;
        bc.dropout = network_.dropout;
        bc.output_kt = network_.output_kt;
        bc.output_kernel = network_.kernel;
        branches_.emplace_back(bc, branch_name(k) + ".");
        // Each branch draws from its own stream, so a single-branch model
        // starts from the same weights as that branch of the fused model.
        Rng branch_rng = root.fork(static_cast<std::uint64_t>(k));
        branches_.back().init_params(store_, branch_rng);
    }
    if (is_fused()) {
        for (BranchKind k : kinds_) store_.add(fusion_name(k), Tensor(Shape{rows, cols}, 1.0 / 3.0));
    }
}

DeepSTCL DeepSTCL::fused(std::size_t rows, std::size_t cols, const SamplingConfig& sampling,
                         const NetworkConfig& network, std::uint64_t init_seed) {
    return DeepSTCL(rows, cols, sampling, network,
                    {BranchKind::closeness, BranchKind::period, BranchKind::trend}, init_seed);
}

DeepSTCL DeepSTCL::single(BranchKind kind, std::size_t rows, std::size_t cols,
                          const SamplingConfig& sampling, const NetworkConfig& network,
                          std::uint64_t init_seed) {
    return DeepSTCL(rows, cols, sampling, network, {kind}, init_seed);
}

std::string DeepSTCL::kind() const {
    if (is_fused()) return "deepstcl";
    switch (kinds_.front()) {
        case BranchKind::closeness: return "clc";
        case BranchKind::period: return "clp";
        case BranchKind::trend: return "clt";
    }
    throw InvariantError("unknown branch kind");
}

std::size_t DeepSTCL::min_history() const {
    std::size_t m = 0;
    for (BranchKind k : kinds_) m = std::max(m, sampling_.length(k) * sampling_.stride(k));
    return m;
}

std::vector<Tensor> DeepSTCL::assemble_inputs(const DemandSeries& series,
                                              std::span<const std::size_t> targets) const {
    const std::size_t P = rows_ * cols_;
    const double inv = 1.0 / scale();
    std::vector<Tensor> out;
    for (BranchKind k : kinds_) {
        const std::size_t len = sampling_.length(k);
        Tensor in(Shape{targets.size(), len, 1, rows_, cols_});
        for (std::size_t b = 0; b < targets.size(); ++b) {
            const auto idx = branch_indices(targets[b], k, sampling_);
            for (std::size_t j = 0; j < len; ++j) {
                const Tensor& c = series.counts(idx[j]);
                double* dst = in.data() + (b * len + j) * P;
                for (std::size_t i = 0; i < P; ++i) dst[i] = c[i] * inv;
            }
        }
        out.push_back(std::move(in));
    }
    return out;
}

Tensor DeepSTCL::forward(const std::vector<Tensor>& inputs, Mode mode, Rng& rng,
                         Trace* trace) const {
    if (inputs.size() != branches_.size()) {
        throw ShapeError("expected " + std::to_string(branches_.size()) + " branch inputs, got " +
                         std::to_string(inputs.size()));
    }
    const std::size_t B = inputs.front().dim(0);
    for (const Tensor& in : inputs) {
        if (in.rank() != 5 || in.dim(0) != B) {
            throw ShapeError("branch inputs must be [B, T, 1, rows, cols] with one batch size, got " +
                             shape_string(in.shape()));
        }
    }
    if (trace) {
        trace->branches.assign(branches_.size(), BranchTrace{});
        trace->last.clear();
        trace->valid = false;
    }
    std::vector<Tensor> last;
    for (std::size_t k = 0; k < branches_.size(); ++k) {
        const Tensor out = branches_[k].forward(store_, inputs[k], mode, rng,
                                                trace ? &trace->branches[k] : nullptr);
        last.push_back(ConvLSTMBranch::last_frame(out));
    }

    const std::size_t P = rows_ * cols_;
    Tensor pred(Shape{B, rows_, cols_});
    if (!is_fused()) {
        std::copy(last[0].values().begin(), last[0].values().end(), pred.data());
    } else {
        for (std::size_t k = 0; k < kinds_.size(); ++k) {
            const Tensor& w = store_.value(fusion_name(kinds_[k]));
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t i = 0; i < P; ++i) pred[b * P + i] += w[i] * last[k][b * P + i];
        }
    }
    if (trace) {
        trace->last = std::move(last);
        trace->valid = true;
    }
    return pred;
}

void DeepSTCL::backward(const Trace& trace, const Tensor& grad_pred) {
    if (!trace.valid) throw InvariantError("backward needs a trace from a forward pass");
    const std::size_t B = trace.last.front().dim(0);
    const std::size_t P = rows_ * cols_;
    if (grad_pred.shape() != Shape{B, rows_, cols_})
        throw ShapeError("prediction gradient has shape " + shape_string(grad_pred.shape()));

    for (std::size_t k = 0; k < branches_.size(); ++k) {
        const std::size_t T = branches_[k].config().seq_len;
        Tensor grad_out(Shape{B, T, 1, rows_, cols_});
        if (is_fused()) {
            const Tensor& w = store_.value(fusion_name(kinds_[k]));
            Tensor& gw = store_.grad(fusion_name(kinds_[k]));
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t i = 0; i < P; ++i) {
                    const double g = grad_pred[b * P + i];
                    gw[i] += g * trace.last[k][b * P + i];
                    grad_out[(b * T + T - 1) * P + i] = g * w[i];
                }
            }
        } else {
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t i = 0; i < P; ++i) grad_out[(b * T + T - 1) * P + i] = grad_pred[b * P + i];
        }
        branches_[k].backward(store_, trace.branches[k], grad_out);
    }
}

void DeepSTCL::commit_running_stats(const Trace& trace) {
    if (!trace.valid) throw InvariantError("no forward pass to take statistics from");
    for (std::size_t k = 0; k < branches_.size(); ++k)
        branches_[k].commit_running_stats(store_, trace.branches[k], network_.bn_momentum);
}

double DeepSTCL::train_batch(const DemandSeries& series, std::span<const std::size_t> targets,
                             Rng& rng) {
    check_compatible(series);
    check_targets(series, targets, true);
    const auto inputs = assemble_inputs(series, targets);
    const Tensor truth = gather_targets(series, targets);
    Trace trace;
    const Tensor pred = forward(inputs, Mode::train, rng, &trace);
    const double loss = mse_loss(pred, truth);
    backward(trace, mse_loss_grad(pred, truth));
    commit_running_stats(trace);
    return loss;
}

Tensor DeepSTCL::predict_scaled(const DemandSeries& series,
                                std::span<const std::size_t> targets) const {
    Rng unused(0);
    return forward(assemble_inputs(series, targets), Mode::infer, unused);
}

}  // namespace stcl
