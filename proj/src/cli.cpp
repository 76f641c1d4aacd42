#include "stcl/cli.hpp"

#include "stcl/config.hpp"
#include "stcl/errors.hpp"
#include "stcl/eval.hpp"
#include "stcl/experiment.hpp"
#include "stcl/ingest.hpp"
#include "stcl/models.hpp"
#include "stcl/synthetic.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace stcl {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path() && !fs::exists(path.parent_path()))
        throw DataError("output directory does not exist: " + path.parent_path().string());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    return in;
}

DemandSeries read_series(const fs::path& path, std::optional<GridSpec> grid) {
    if (!fs::exists(path)) throw DataError("data file not found: " + path.string());
    return read_snapshot_stream(path, grid);
}

std::vector<OrderRecord> read_orders(const fs::path& path, const ColumnSchema& columns,
                                     std::size_t& malformed, std::ostream& err) {
    std::ifstream in = open_in(path);
    OrderReader reader(in, columns);
    std::vector<OrderRecord> records;
    while (auto r = reader.next()) records.push_back(std::move(*r));
    malformed = reader.malformed().size();
    if (malformed > 0) {
        err << "warning: skipped " << malformed << " malformed line(s) in " << path.string();
        const std::size_t shown = std::min<std::size_t>(malformed, 5);
        for (std::size_t i = 0; i < shown; ++i)
            err << (i ? "; " : ": ") << "line " << reader.malformed()[i].line_number << " ("
                << reader.malformed()[i].reason << ")";
        err << '\n';
    }
    return records;
}

std::pair<std::int64_t, std::int64_t> ingest_window(const RunConfig& cfg,
                                                    std::span<const OrderRecord> records) {
    if (cfg.ingest.t_start && cfg.ingest.t_end) return {*cfg.ingest.t_start, *cfg.ingest.t_end};
    if (records.empty())
        throw DataError("no usable orders and no [ingest] t_start/t_end to define the time window");
    auto w = covering_window(records, cfg.ingest.bucket_seconds);
    if (cfg.ingest.t_start) w.first = *cfg.ingest.t_start;
    if (cfg.ingest.t_end) w.second = *cfg.ingest.t_end;
    if (w.first >= w.second) throw ConfigError("time window is empty");
    return w;
}

// Bucket index from "--at": a plain index or a bucket-aligned time.
std::size_t resolve_at(const std::string& at, const DemandSeries& series) {
    // Short digit strings are indices; epoch times have ten or more digits.
    std::size_t index = 0;
    const auto [p, ec] = std::from_chars(at.data(), at.data() + at.size(), index);
    if (ec == std::errc() && p == at.data() + at.size() && at.size() < 10) {
        if (index > series.size())
            throw DataError("--at " + at + " lies more than one bucket past the end of the data (" +
                            std::to_string(series.size()) + " buckets)");
        return index;
    }
    const auto t = parse_timestamp(at);
    if (!t) throw ConfigError("--at must be a bucket index or a time, got '" + at + "'");
    const double offset = *t - static_cast<double>(series.t0());
    const double k = offset / static_cast<double>(series.bucket_seconds());
    if (offset < 0 || k != std::floor(k))
        throw DataError("time " + at + " is not a bucket boundary of the series");
    if (k > static_cast<double>(series.size()))
        throw DataError("time " + at + " lies more than one bucket past the end of the data");
    return static_cast<std::size_t>(k);
}

int cmd_ingest(const fs::path& orders, const fs::path& config, const fs::path& out_path,
               std::ostream& out, std::ostream& err) {
    const RunConfig cfg = RunConfig::load(config);
    if (!fs::exists(orders)) throw DataError("orders file not found: " + orders.string());
    std::size_t malformed = 0;
    const auto records = read_orders(orders, cfg.ingest.columns, malformed, err);
    const auto [t0, t1] = ingest_window(cfg, records);
    const BinningResult r = bin_orders(records, cfg.grid, cfg.ingest.bucket_seconds, t0, t1, malformed);
    {
        std::ofstream f = open_out(out_path);
        write_snapshot_stream(r.series, f);
    }
    {
        std::ofstream f = open_out(out_path.string() + ".report");
        write_report(r.report, f);
    }
    out << "binned " << r.report.records_binned << " of " << r.report.records_read << " records into "
        << r.series.size() << " buckets of " << cfg.grid.rows << "x" << cfg.grid.cols << "\n";
    return kExitOk;
}

int cmd_synth(const fs::path& spec_path, const fs::path& out_path, const std::string& orders_path,
              std::ostream& out) {
    const SynthConfig sc = load_synth_config(spec_path);
    const DemandSeries series = generate_synthetic(sc.spec);
    {
        std::ofstream f = open_out(out_path);
        write_snapshot_stream(series, f);
    }
    if (!orders_path.empty()) {
        const auto orders = synthesize_orders(series, sc.orders_seed);
        std::ofstream f = open_out(orders_path);
        f << "order_id,pickup_time,pickup_lng,pickup_lat\n";
        char buf[128];
        for (const OrderRecord& o : orders) {
            std::snprintf(buf, sizeof buf, ",%.0f,%.7f,%.7f\n", o.pickup_time, o.pickup_lng, o.pickup_lat);
            f << o.order_id << buf;
        }
        out << "wrote " << orders.size() << " orders\n";
    }
    out << "wrote " << series.size() << " buckets of " << series.rows() << "x" << series.cols() << "\n";
    return kExitOk;
}

int cmd_train(const fs::path& data, const fs::path& config, const fs::path& model_out,
              const std::string& kind, std::ostream& out) {
    RunConfig cfg = RunConfig::load(config);
    if (!kind.empty()) cfg.model = parse_model_kind(kind);
    if (cfg.model == ModelKind::persistence)
        throw ConfigError("persistence has no parameters to train; evaluate it directly");
    const DemandSeries series = read_series(data, cfg.grid);
    out << "epoch,train_loss,val_loss\n";
    const FitResult fit = fit_model(cfg, series, [&](const EpochRecord& r) { out << history_line(r) << '\n' << std::flush; });
    save_bundle(model_out, *fit.model, cfg, fit.history);
    return kExitOk;
}

int cmd_predict(const fs::path& model_dir, const fs::path& data, const std::string& at,
                const fs::path& out_path, const std::string& heatmap) {
    const Bundle b = load_bundle(model_dir);
    const DemandSeries series = read_series(data, std::nullopt);
    b.model->check_compatible(series);
    const std::size_t k = resolve_at(at, series);
    Tensor pred = b.model->predict(series, std::span<const std::size_t>(&k, 1)).front();
    for (double& v : pred.values()) v = std::max(0.0, v);
    const DemandSeries one(GridSpec::unit(series.rows(), series.cols()), series.bucket_seconds(),
                           series.time_of(k), {pred});
    {
        std::ofstream f = open_out(out_path);
        write_snapshot_stream(one, f);
    }
    if (!heatmap.empty()) export_heatmap(one.snapshot(0), fs::path(heatmap));
    return kExitOk;
}

int cmd_evaluate(const std::vector<std::string>& models, const fs::path& data,
                 const std::string& hours_text, int test_days_opt, const fs::path& out_path) {
    // Load everything first so a bad bundle fails before any work.
    std::vector<Bundle> bundles;
    std::vector<bool> is_persistence;
    for (const std::string& m : models) {
        if (m == "persistence") {
            bundles.push_back(Bundle{RunConfig{}, nullptr});
            is_persistence.push_back(true);
        } else {
            bundles.push_back(load_bundle(m));
            is_persistence.push_back(false);
        }
    }
    const DemandSeries series = read_series(data, std::nullopt);
    for (std::size_t i = 0; i < bundles.size(); ++i)
        if (!is_persistence[i]) bundles[i].model->check_compatible(series);

    std::vector<ModelMetrics> results;
    const PersistenceForecaster persistence;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
        const EvalConfig& ec = bundles[i].config.eval;
        const std::vector<int> hours = hours_text.empty() ? ec.hours : parse_int_list(hours_text);
        for (int h : hours)
            if (h < 0 || h > 23) throw ConfigError("--hours entries must lie in 0..23");
        const std::size_t days = test_days_opt > 0 ? static_cast<std::size_t>(test_days_opt) : ec.test_days;
        const Forecaster& f = is_persistence[i] ? static_cast<const Forecaster&>(persistence) : *bundles[i].model;
        const auto targets = test_targets(series, days);
        if (!targets.empty() && targets.front() < f.min_history())
            throw DataError("test period starts before " + f.kind() + " has enough history");
        results.push_back({f.kind(), evaluate_at_hours(f, series, targets, hours, true)});
    }
    std::ofstream f = open_out(out_path);
    write_metrics_csv(results, f);
    return kExitOk;
}

int cmd_sweep(const fs::path& orders, const fs::path& config, const std::string& sizes,
              const std::string& hours_text, const fs::path& out_path, std::ostream& err) {
    const RunConfig cfg = RunConfig::load(config);
    const std::vector<double> areas = parse_double_list(sizes);
    const std::vector<int> hours = hours_text.empty() ? std::vector<int>{9, 12, 17} : parse_int_list(hours_text);
    if (!fs::exists(orders)) throw DataError("orders file not found: " + orders.string());
    std::size_t malformed = 0;
    const auto records = read_orders(orders, cfg.ingest.columns, malformed, err);
    const auto rows = partition_sweep(records, cfg, areas, hours);
    std::ofstream f = open_out(out_path);
    write_sweep_csv(rows, f);
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spatio-temporal ride-demand forecasting"};
    app.require_subcommand(1);

    std::string orders, config, out_path, spec, data, model_out, model_dir, at, sizes, hours, kind,
        synth_orders, heatmap;
    std::vector<std::string> models;
    int test_days = 0;

    auto* ingest = app.add_subcommand("ingest", "Bin raw orders into a snapshot stream");
    ingest->add_option("--orders", orders, "Delimited order file")->required();
    ingest->add_option("--config", config, "Run config")->required();
    ingest->add_option("--out", out_path, "Snapshot-stream output (report goes to <out>.report)")->required();

    auto* synth = app.add_subcommand("synth", "Generate a synthetic demand series");
    synth->add_option("--spec", spec, "Synthetic spec file")->required();
    synth->add_option("--out", out_path, "Snapshot-stream output")->required();
    synth->add_option("--orders", synth_orders, "Also write matching individual orders");

    auto* train = app.add_subcommand("train", "Train a model and write a bundle directory");
    train->add_option("--data", data, "Snapshot stream")->required();
    train->add_option("--config", config, "Run config")->required();
    train->add_option("--model-out", model_out, "Bundle directory")->required();
    train->add_option("--kind", kind, "Override [model] kind");

    auto* predict = app.add_subcommand("predict", "Forecast one bucket");
    predict->add_option("--model", model_dir, "Bundle directory")->required();
    predict->add_option("--data", data, "Snapshot stream holding the history")->required();
    predict->add_option("--at", at, "Target bucket index or time")->required();
    predict->add_option("--out", out_path, "Snapshot-stream output")->required();
    predict->add_option("--heatmap", heatmap, "Also write the forecast as a P2 graymap");

    auto* evaluate = app.add_subcommand("evaluate", "Hour-of-day metrics on the test period");
    evaluate->add_option("--model", models, "Bundle directory or 'persistence' (repeatable)")->required();
    evaluate->add_option("--data", data, "Snapshot stream")->required();
    evaluate->add_option("--hours", hours, "Comma-separated hours of day");
    evaluate->add_option("--test-days", test_days, "Days at the end of the data to evaluate");
    evaluate->add_option("--out", out_path, "Metrics CSV")->required();

    auto* sweep = app.add_subcommand("sweep", "Partition-size sweep over cell areas");
    sweep->add_option("--orders", orders, "Delimited order file")->required();
    sweep->add_option("--config", config, "Run config (grid box, model, training)")->required();
    sweep->add_option("--sizes", sizes, "Comma-separated cell areas in km^2")->required();
    sweep->add_option("--hours", hours, "Comma-separated hours of day (default 9,12,17)");
    sweep->add_option("--out", out_path, "Sweep CSV")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        if (app.get_subcommands().empty()) err << app.help();
        return kExitUsage;
    }

    try {
        if (ingest->parsed()) return cmd_ingest(orders, config, out_path, out, err);
        if (synth->parsed()) return cmd_synth(spec, out_path, synth_orders, out);
        if (train->parsed()) return cmd_train(data, config, model_out, kind, out);
        if (predict->parsed()) return cmd_predict(model_dir, data, at, out_path, heatmap);
        if (evaluate->parsed()) return cmd_evaluate(models, data, hours, test_days, out_path);
        if (sweep->parsed()) return cmd_sweep(orders, config, sizes, hours, out_path, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const InvariantError& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
    err << "error: no command given\n";
    return kExitUsage;
}

}  // namespace stcl
