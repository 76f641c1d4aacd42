#pragma once

#include "stcl/forecaster.hpp"
#include "stcl/ops.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stcl {

// ---------------------------------------------------------------------------
// Dense LSTM shared by every cell. Each cell's scalar history is an
// independent sequence; a linear head maps the last hidden state to the
// forecast for that cell.

struct LSTMCellConfig {
    std::size_t input_size = 1;
    std::size_t hidden_size = 100;
    std::size_t lookback = 10;
    double dropout = 0.2;

    void validate() const;
};

struct LSTMState {
    std::vector<double> h;
    std::vector<double> c;
};

// Plain LSTM step (no peepholes) with gate blocks i, f, g, o along the rows of
// wx [4h, in], wh [4h, h] and b [4h].
LSTMState lstm_cell_step(const Tensor& wx, const Tensor& wh, const Tensor& b,
                         std::span<const double> x, const LSTMState& prev);

class CellLSTM : public TrainableForecaster {
public:
    CellLSTM(std::size_t rows, std::size_t cols, LSTMCellConfig cfg, std::uint64_t init_seed);

    std::string kind() const override { return "lstm"; }
    std::size_t min_history() const override { return cfg_.lookback; }
    const LSTMCellConfig& config() const { return cfg_; }

    double train_batch(const DemandSeries& series, std::span<const std::size_t> targets,
                       Rng& rng) override;

    // Whole-grid forecast for the bucket after the series ends.
    DemandSnapshot forecast_all_cells(const DemandSeries& series) const;

protected:
    Tensor predict_scaled(const DemandSeries& series,
                          std::span<const std::size_t> targets) const override;

private:
    struct Pass;
    // Column j of the unrolled batch is cell (j % P) of target (j / P).
    Tensor run(const DemandSeries& series, std::span<const std::size_t> targets, Mode mode,
               Rng* rng, Pass* pass) const;

    LSTMCellConfig cfg_;
};

// ---------------------------------------------------------------------------
// Spatial-only CNN over the previous snapshot:
//   conv -> batch norm -> relu -> conv -> batch norm -> relu -> conv(1) -> relu

struct CNNConfig {
    std::size_t filters1 = 16;
    std::size_t filters2 = 16;
    std::size_t kernel = 3;
    double bn_momentum = 0.1;

    void validate() const;
};

class SnapshotCNN : public TrainableForecaster {
public:
    SnapshotCNN(std::size_t rows, std::size_t cols, CNNConfig cfg, std::uint64_t init_seed);

    std::string kind() const override { return "cnn"; }
    std::size_t min_history() const override { return 1; }
    const CNNConfig& config() const { return cfg_; }

    struct Trace {
        Tensor input, a1, a2, a3;  // conv inputs per layer, [B, C, rows, cols]
        BatchNormResult bn1, bn2;
        Tensor pre1, pre2, pre3;   // relu inputs
        bool valid = false;
    };

    // Scaled snapshots [B, 1, rows, cols] -> [B, 1, rows, cols].
    Tensor forward(const Tensor& input, Mode mode, Trace* trace = nullptr) const;
    void backward(const Trace& trace, const Tensor& grad_out);
    void commit_running_stats(const Trace& trace);

    double train_batch(const DemandSeries& series, std::span<const std::size_t> targets,
                       Rng& rng) override;

protected:
    Tensor predict_scaled(const DemandSeries& series,
                          std::span<const std::size_t> targets) const override;

private:
    Tensor assemble(const DemandSeries& series, std::span<const std::size_t> targets) const;

    CNNConfig cfg_;
};

}  // namespace stcl
