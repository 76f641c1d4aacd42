#pragma once

#include "stcl/forecaster.hpp"
#include "stcl/param_store.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace stcl {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 16;
    AdamConfig adam;
    // Learning rate multiplier applied after every epoch; 1 keeps it fixed.
    double lr_decay = 1.0;
    // Early stopping on the validation slice; 0 disables it.
    std::size_t patience = 10;
    // Fraction of training targets, taken from the end in time order, held
    // out for validation.
    double val_fraction = 0.1;
    // Reload the parameters of the best validation epoch when training ends.
    bool restore_best = true;
    // Earliest training target; models needing more history start later.
    std::size_t first_target = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    std::optional<double> val_loss;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    bool stopped_early = false;
    std::optional<std::size_t> best_epoch;
};

// Target indices first, first + 1, ..., last - 1.
std::vector<std::size_t> target_range(std::size_t first, std::size_t last);

// Mini-batch Adam over shuffled training targets. Deterministic for a given
// Rng state.
TrainHistory train(TrainableForecaster& model, const DemandSeries& series,
                   std::span<const std::size_t> targets, const TrainConfig& cfg, Rng& rng,
                   const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace stcl
