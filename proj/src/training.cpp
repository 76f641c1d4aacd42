#include "stcl/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stcl {

std::vector<std::size_t> target_range(std::size_t first, std::size_t last) {
    std::vector<std::size_t> out;
    for (std::size_t t = first; t < last; ++t) out.push_back(t);
    return out;
}

TrainHistory train(TrainableForecaster& model, const DemandSeries& series,
                   std::span<const std::size_t> targets, const TrainConfig& cfg, Rng& rng,
                   const std::function<void(const EpochRecord&)>& on_epoch) {
    TrainHistory history;
    if (cfg.epochs == 0) return history;
    if (targets.empty()) throw std::invalid_argument("train: no training samples");
    if (cfg.batch_size == 0) throw std::invalid_argument("train: batch size must be positive");

    std::vector<std::size_t> ordered(targets.begin(), targets.end());
    std::sort(ordered.begin(), ordered.end());
    auto n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * static_cast<double>(ordered.size())));
    if (n_val >= ordered.size()) n_val = 0;
    const std::vector<std::size_t> val(ordered.end() - static_cast<std::ptrdiff_t>(n_val), ordered.end());
    std::vector<std::size_t> order(ordered.begin(), ordered.end() - static_cast<std::ptrdiff_t>(n_val));

    ParamStore& store = model.params();
    store.zero_grad();
    std::optional<ParamStore> best;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    AdamConfig adam = cfg.adam;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - start);
            const std::span<const std::size_t> batch(order.data() + start, n);
            total += model.train_batch(series, batch, rng) * static_cast<double>(n);
            adam_step(store, adam);
        }
        adam.lr *= cfg.lr_decay;
        EpochRecord rec{epoch, total / static_cast<double>(order.size()), std::nullopt};
        if (!val.empty()) rec.val_loss = model.eval_loss(series, val);
        history.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (rec.val_loss) {
            if (*rec.val_loss < best_val) {
                best_val = *rec.val_loss;
                history.best_epoch = epoch;
                since_best = 0;
                if (cfg.restore_best) best = store;
            } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
                history.stopped_early = true;
                break;
            }
        }
    }
    if (best) store.copy_values_from(*best);
    return history;
}

}  // namespace stcl
