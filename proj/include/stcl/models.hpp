#pragma once

#include "stcl/config.hpp"
#include "stcl/forecaster.hpp"
#include "stcl/training.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>

namespace stcl {

// Seed streams derived from the run seed.
std::uint64_t init_seed(const RunConfig& cfg);
Rng training_rng(const RunConfig& cfg);

// Trainable model for cfg.model on a rows x cols grid. Persistence has no
// parameters and is rejected with ConfigError.
std::unique_ptr<TrainableForecaster> make_model(const RunConfig& cfg, std::size_t rows,
                                                std::size_t cols);

// Bundle directory layout:
//   model.cfg            run config (model kind, grid, hyper-parameters)
//   closeness.ckpt, period.ckpt, trend.ckpt, fusion.ckpt   DeepSTCL family
//   model.ckpt           lstm / cnn
//   scale.ckpt           data scale
//   history.csv          epoch,train_loss,val_loss
void save_bundle(const std::filesystem::path& dir, const TrainableForecaster& model,
                 const RunConfig& cfg, const TrainHistory& history);

struct Bundle {
    RunConfig config;
    std::unique_ptr<TrainableForecaster> model;
};

Bundle load_bundle(const std::filesystem::path& dir);

void write_history(const TrainHistory& history, std::ostream& out);
// One "epoch,train_loss,val_loss" line (no newline).
std::string history_line(const EpochRecord& record);

}  // namespace stcl
