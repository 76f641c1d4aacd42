#include "stcl/forecaster.hpp"

#include "stcl/errors.hpp"

#include <algorithm>

namespace stcl {

namespace {
constexpr std::size_t kPredictChunk = 32;
}

void Forecaster::check_compatible(const DemandSeries&) const {}

void Forecaster::check_targets(const DemandSeries& series, std::span<const std::size_t> targets,
                               bool need_truth) const {
    for (std::size_t t : targets) {
        if (t < min_history()) {
            throw DataError(kind() + ": target " + std::to_string(t) + " needs " +
                            std::to_string(min_history()) + " buckets of history");
        }
        if (t > series.size() || (need_truth && t == series.size())) {
            throw DataError(kind() + ": target " + std::to_string(t) +
                            " lies beyond the series (length " + std::to_string(series.size()) + ")");
        }
    }
}

TrainableForecaster::TrainableForecaster(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("model grid must be non-empty");
    store_.add("scale", Tensor(Shape{1}, 1.0), false);
}

void TrainableForecaster::fit_scale(const DemandSeries& series, std::size_t end) {
    const double m = series.max_value(0, end);
    store_.value("scale")[0] = m > 0.0 ? m : 1.0;
}

void TrainableForecaster::check_compatible(const DemandSeries& series) const {
    if (series.rows() != rows_ || series.cols() != cols_) {
        throw DataError(kind() + " model expects a " + std::to_string(rows_) + "x" +
                        std::to_string(cols_) + " grid but the data is " +
                        std::to_string(series.rows()) + "x" + std::to_string(series.cols()));
    }
}

Tensor TrainableForecaster::gather_targets(const DemandSeries& series,
                                           std::span<const std::size_t> targets) const {
    const std::size_t P = rows_ * cols_;
    const double inv = 1.0 / scale();
    Tensor out(Shape{targets.size(), rows_, cols_});
    for (std::size_t b = 0; b < targets.size(); ++b) {
        const Tensor& c = series.counts(targets[b]);
        for (std::size_t i = 0; i < P; ++i) out[b * P + i] = c[i] * inv;
    }
    return out;
}

double TrainableForecaster::eval_loss(const DemandSeries& series,
                                      std::span<const std::size_t> targets) const {
    check_compatible(series);
    check_targets(series, targets, true);
    if (targets.empty()) return 0.0;
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < targets.size(); start += kPredictChunk) {
        const auto chunk = targets.subspan(start, std::min(kPredictChunk, targets.size() - start));
        const Tensor pred = predict_scaled(series, chunk);
        const Tensor truth = gather_targets(series, chunk);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pred[i] - truth[i];
            total += d * d;
        }
        count += pred.size();
    }
    return total / static_cast<double>(count);
}

std::vector<Tensor> TrainableForecaster::predict(const DemandSeries& series,
                                                 std::span<const std::size_t> targets) const {
    check_compatible(series);
    check_targets(series, targets, false);
    std::vector<Tensor> out;
    out.reserve(targets.size());
    const std::size_t P = rows_ * cols_;
    for (std::size_t start = 0; start < targets.size(); start += kPredictChunk) {
        const auto chunk = targets.subspan(start, std::min(kPredictChunk, targets.size() - start));
        const Tensor pred = predict_scaled(series, chunk);
        for (std::size_t b = 0; b < chunk.size(); ++b) {
            Tensor snap(Shape{rows_, cols_});
            for (std::size_t i = 0; i < P; ++i) snap[i] = pred[b * P + i] * scale();
            out.push_back(std::move(snap));
        }
    }
    return out;
}

double mse_loss(const Tensor& prediction, const Tensor& target) {
    require_same_shape(prediction, target, "mse_loss");
    if (prediction.size() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const double d = prediction[i] - target[i];
        s += d * d;
    }
    return s / static_cast<double>(prediction.size());
}

Tensor mse_loss_grad(const Tensor& prediction, const Tensor& target) {
    require_same_shape(prediction, target, "mse_loss_grad");
    Tensor g = Tensor::zeros_like(prediction);
    const double k = 2.0 / static_cast<double>(prediction.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = k * (prediction[i] - target[i]);
    return g;
}

std::vector<Tensor> PersistenceForecaster::predict(const DemandSeries& series,
                                                   std::span<const std::size_t> targets) const {
    check_targets(series, targets, false);
    std::vector<Tensor> out;
    out.reserve(targets.size());
    for (std::size_t t : targets) out.push_back(series.counts(t - 1));
    return out;
}

DemandSnapshot persistence_forecast(const DemandSeries& series) {
    if (series.empty()) throw DataError("persistence forecast needs a non-empty series");
    return series.snapshot(series.size() - 1);
}

}  // namespace stcl
