#pragma once

#include "stcl/grid.hpp"
#include "stcl/param_store.hpp"
#include "stcl/rng.hpp"
#include "stcl/tensor.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace stcl {

// Anything that maps demand history to a one-step-ahead snapshot.
class Forecaster {
public:
    virtual ~Forecaster() = default;

    // Short model name used in metric tables ("deepstcl", "clc", "lstm", ...).
    virtual std::string kind() const = 0;

    // Smallest target index the model has enough history for.
    virtual std::size_t min_history() const = 0;

    // Inference-mode predictions in demand units, one [rows, cols] tensor per
    // target index t, using snapshots strictly before t. t may equal
    // series.size() (forecast past the end of the data).
    virtual std::vector<Tensor> predict(const DemandSeries& series,
                                        std::span<const std::size_t> targets) const = 0;

    // Throws DataError describing the mismatch when the series grid differs
    // from the one the model was built for. Default accepts any grid.
    virtual void check_compatible(const DemandSeries& series) const;

protected:
    void check_targets(const DemandSeries& series, std::span<const std::size_t> targets,
                       bool need_truth) const;
};

// Models with parameters. Inputs and targets are divided by a stored data
// scale (the "scale" buffer) so training runs on roughly unit-range values.
class TrainableForecaster : public Forecaster {
public:
    TrainableForecaster(std::size_t rows, std::size_t cols);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

    double scale() const { return store_.value("scale")[0]; }
    // Sets the scale to the largest count in snapshots [0, end) (1 if all zero).
    void fit_scale(const DemandSeries& series, std::size_t end);

    // Train-mode forward and backward over a batch of targets. Gradients are
    // accumulated into params(), running statistics are updated, and the
    // batch mean squared error (scaled units) is returned.
    virtual double train_batch(const DemandSeries& series, std::span<const std::size_t> targets,
                               Rng& rng) = 0;

    // Inference-mode mean squared error (scaled units) over the targets.
    double eval_loss(const DemandSeries& series, std::span<const std::size_t> targets) const;

    void check_compatible(const DemandSeries& series) const override;

protected:
    // Inference-mode outputs in scaled units, [B, rows, cols].
    virtual Tensor predict_scaled(const DemandSeries& series,
                                  std::span<const std::size_t> targets) const = 0;

    Tensor gather_targets(const DemandSeries& series, std::span<const std::size_t> targets) const;

public:
    std::vector<Tensor> predict(const DemandSeries& series,
                                std::span<const std::size_t> targets) const override;

protected:
    std::size_t rows_;
    std::size_t cols_;
    ParamStore store_;
};

// Mean squared error over all entries, and its gradient 2 (pred - target) / n.
double mse_loss(const Tensor& prediction, const Tensor& target);
Tensor mse_loss_grad(const Tensor& prediction, const Tensor& target);

// Last observed snapshot, unchanged.
class PersistenceForecaster : public Forecaster {
public:
    std::string kind() const override { return "persistence"; }
    std::size_t min_history() const override { return 1; }
    std::vector<Tensor> predict(const DemandSeries& series,
                                std::span<const std::size_t> targets) const override;
};

// Single-target convenience for persistence.
DemandSnapshot persistence_forecast(const DemandSeries& series);

}  // namespace stcl
