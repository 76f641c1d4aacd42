#include "stcl/models.hpp"

#include "stcl/baselines.hpp"
#include "stcl/deepstcl.hpp"
#include "stcl/errors.hpp"

#include <cstdio>
#include <fstream>

namespace stcl {

namespace fs = std::filesystem;

std::uint64_t init_seed(const RunConfig& cfg) { return Rng(cfg.seed).fork(1).next_u64(); }

Rng training_rng(const RunConfig& cfg) { return Rng(cfg.seed).fork(2); }

std::unique_ptr<TrainableForecaster> make_model(const RunConfig& cfg, std::size_t rows,
                                                std::size_t cols) {
    const std::uint64_t seed = init_seed(cfg);
    switch (cfg.model) {
        case ModelKind::deepstcl:
            return std::make_unique<DeepSTCL>(DeepSTCL::fused(rows, cols, cfg.sampling, cfg.network, seed));
        case ModelKind::clc:
            return std::make_unique<DeepSTCL>(
                DeepSTCL::single(BranchKind::closeness, rows, cols, cfg.sampling, cfg.network, seed));
        case ModelKind::clp:
            return std::make_unique<DeepSTCL>(
                DeepSTCL::single(BranchKind::period, rows, cols, cfg.sampling, cfg.network, seed));
        case ModelKind::clt:
            return std::make_unique<DeepSTCL>(
                DeepSTCL::single(BranchKind::trend, rows, cols, cfg.sampling, cfg.network, seed));
        case ModelKind::lstm: return std::make_unique<CellLSTM>(rows, cols, cfg.lstm, seed);
        case ModelKind::cnn: return std::make_unique<SnapshotCNN>(rows, cols, cfg.cnn, seed);
        case ModelKind::persistence:
            throw ConfigError("persistence has no parameters to train; evaluate it directly");
    }
    throw InvariantError("unknown model kind");
}

namespace {

struct CheckpointFile {
    const char* file;
    const char* prefix;
};

std::vector<CheckpointFile> layout(ModelKind kind) {
    switch (kind) {
        case ModelKind::deepstcl:
            return {{"closeness.ckpt", "closeness."}, {"period.ckpt", "period."}, {"trend.ckpt", "trend."},
                    {"fusion.ckpt", "fusion."}, {"scale.ckpt", "scale"}};
        case ModelKind::clc: return {{"closeness.ckpt", "closeness."}, {"scale.ckpt", "scale"}};
        case ModelKind::clp: return {{"period.ckpt", "period."}, {"scale.ckpt", "scale"}};
        case ModelKind::clt: return {{"trend.ckpt", "trend."}, {"scale.ckpt", "scale"}};
        case ModelKind::lstm:
        case ModelKind::cnn: return {{"model.ckpt", ""}};
        case ModelKind::persistence: break;
    }
    throw InvariantError("no checkpoint layout for " + to_string(kind));
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

std::string history_line(const EpochRecord& r) {
    return std::to_string(r.epoch) + "," + num(r.train_loss) + "," + (r.val_loss ? num(*r.val_loss) : "nan");
}

void write_history(const TrainHistory& history, std::ostream& out) {
    out << "epoch,train_loss,val_loss\n";
    for (const EpochRecord& r : history.epochs) out << history_line(r) << '\n';
}

void save_bundle(const fs::path& dir, const TrainableForecaster& model, const RunConfig& cfg,
                 const TrainHistory& history) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create model directory " + dir.string() + ": " + ec.message());
    RunConfig saved = cfg;
    saved.grid.rows = model.rows();
    saved.grid.cols = model.cols();
    saved.model = parse_model_kind(model.kind());
    saved.save(dir / "model.cfg");
    for (const CheckpointFile& f : layout(saved.model)) save_checkpoint(model.params(), dir / f.file, f.prefix);
    std::ofstream hist(dir / "history.csv");
    if (!hist) throw DataError("cannot write " + (dir / "history.csv").string());
    write_history(history, hist);
}

Bundle load_bundle(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("model directory not found: " + dir.string());
    if (!fs::exists(dir / "model.cfg")) throw DataError("missing " + (dir / "model.cfg").string());
    Bundle b{RunConfig::load(dir / "model.cfg"), nullptr};
    b.model = make_model(b.config, b.config.grid.rows, b.config.grid.cols);
    std::size_t loaded = 0;
    for (const CheckpointFile& f : layout(b.config.model)) loaded += load_checkpoint(b.model->params(), dir / f.file);
    if (loaded != b.model->params().size()) {
        throw DataError("model bundle " + dir.string() + " holds " + std::to_string(loaded) + " of " +
                        std::to_string(b.model->params().size()) + " parameters");
    }
    return b;
}

}  // namespace stcl
