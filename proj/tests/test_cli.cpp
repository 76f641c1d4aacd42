#include "doctest.h"

#include "cli_util.hpp"
#include "oracles.hpp"
#include "stcl/grid.hpp"

#include <algorithm>
#include <cmath>

using namespace testutil;

namespace {

const std::string kFixture = STCL_TEST_DATA "/orders_200.csv";

const char* kIngestConfig =
    "[grid]\nlat_min = 30.65\nlat_max = 30.73\nlng_min = 104.04\nlng_max = 104.13\nrows = 6\ncols = 5\n"
    "[ingest]\nbucket_seconds = 3600\nt_start = 2016-11-01 00:00:00\nt_end = 2016-11-03 00:00:00\n";

// Ten days of hourly data on a 4x4 grid; the last day is the test period.
const char* kSynth =
    "[synthetic]\nrows = 4\ncols = 4\nbuckets = 240\nnoise_sigma = 0.5\nseed = 3\n";

const char* kConstSynth =
    "[synthetic]\nrows = 4\ncols = 4\nbuckets = 240\nnoise_sigma = 0\ndaily = 0\nweekly = 0\n";

std::string train_config(const std::string& kind, int epochs, std::size_t rows = 4) {
    return "[grid]\nrows = " + std::to_string(rows) + "\ncols = " + std::to_string(rows) +
           "\n[model]\nkind = " + kind +
           "\n[sampling]\ncloseness = 2\nperiod = 1\ntrend = 1\n"
           "[network]\nhidden = 2\n[lstm]\nhidden = 3\nlookback = 3\n[cnn]\nfilters1 = 2\nfilters2 = 2\n"
           "[train]\nepochs = " + std::to_string(epochs) + "\nbatch_size = 8\nseed = 5\n"
           "[eval]\ntest_days = 1\n";
}

}  // namespace

TEST_CASE("usage errors exit 1 and help exits 0") {
    CHECK(cli({"--help"}).code == 0);
    CHECK(cli({}).code == 1);
    CHECK(cli({"frobnicate"}).code == 1);
    CHECK(cli({"ingest", "--orders", "x"}).code == 1);
    const CliRun r = cli({"train", "--data", "a", "--config", "b", "--model-out", "c", "--bogus"});
    CHECK(r.code == 1);
    CHECK_FALSE(r.err.empty());
}

TEST_CASE("ingest writes stream and report matching the brute-force count") {
    const fs::path d = scratch_dir("cli_ingest");
    write_file(d / "run.cfg", kIngestConfig);
    const CliRun r = cli({"ingest", "--orders", kFixture, "--config", (d / "run.cfg").string(), "--out",
                          (d / "demand.txt").string()});
    REQUIRE(r.code == 0);
    CHECK(r.err.find("malformed") != std::string::npos);
    CHECK(fs::exists(d / "demand.txt.report"));

    std::size_t bad = 0;
    const auto orders = oracle::read_orders(kFixture, bad);
    const stcl::DemandSeries s = stcl::read_snapshot_stream(d / "demand.txt");
    REQUIRE(s.size() == 48);
    for (std::size_t k = 0; k < s.size(); ++k)
        for (std::size_t m = 0; m < 6; ++m)
            for (std::size_t n = 0; n < 5; ++n)
                CHECK(s.counts(k)[m * 5 + n] ==
                      oracle::brute_count(orders, 30.65, 30.73, 104.04, 104.13, 6, 5, 1477958400, 3600, k, m, n));

    const std::string first = read_file(d / "demand.txt");
    REQUIRE(cli({"ingest", "--orders", kFixture, "--config", (d / "run.cfg").string(), "--out",
                 (d / "demand2.txt").string()}).code == 0);
    CHECK(read_file(d / "demand2.txt") == first);
    CHECK(read_file(d / "demand2.txt.report") == read_file(d / "demand.txt.report"));
}

TEST_CASE("missing inputs exit 2 and name the path") {
    const fs::path d = scratch_dir("cli_missing");
    write_file(d / "run.cfg", kIngestConfig);
    const std::string missing = (d / "nope.csv").string();
    const CliRun r = cli({"ingest", "--orders", missing, "--config", (d / "run.cfg").string(), "--out",
                          (d / "o.txt").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find(missing) != std::string::npos);
    CHECK_FALSE(fs::exists(d / "o.txt"));

    const CliRun bad_cfg = cli({"ingest", "--orders", kFixture, "--config", (d / "none.cfg").string(),
                                "--out", (d / "o.txt").string()});
    CHECK(bad_cfg.code == 1);
    write_file(d / "typo.cfg", std::string(kIngestConfig) + "[grid]\nrow = 3\n");
    CHECK(cli({"ingest", "--orders", kFixture, "--config", (d / "typo.cfg").string(), "--out",
               (d / "o.txt").string()}).code == 1);
}

TEST_CASE("train with zero epochs writes a bundle and an empty history") {
    const fs::path d = scratch_dir("cli_zero");
    write_file(d / "synth.cfg", kSynth);
    write_file(d / "run.cfg", train_config("deepstcl", 0));
    REQUIRE(cli({"synth", "--spec", (d / "synth.cfg").string(), "--out", (d / "data.txt").string()}).code == 0);
    const CliRun r = cli({"train", "--data", (d / "data.txt").string(), "--config", (d / "run.cfg").string(),
                          "--model-out", (d / "model").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out == "epoch,train_loss,val_loss\n");
    CHECK(fs::exists(d / "model" / "model.cfg"));
    CHECK(read_file(d / "model" / "history.csv") == "epoch,train_loss,val_loss\n");
}

TEST_CASE("persistence on constant data scores zero everywhere") {
    const fs::path d = scratch_dir("cli_const");
    write_file(d / "synth.cfg", kConstSynth);
    REQUIRE(cli({"synth", "--spec", (d / "synth.cfg").string(), "--out", (d / "data.txt").string()}).code == 0);
    const CliRun r = cli({"evaluate", "--model", "persistence", "--data", (d / "data.txt").string(), "--hours",
                          "6,9,17", "--out", (d / "m.csv").string()});
    REQUIRE(r.code == 0);
    const std::string csv = read_file(d / "m.csv");
    CHECK(csv ==
          "model,hour,rmse,mae,mape,u,skipped\n"
          "persistence,6,0,0,0,48,0\n"
          "persistence,9,0,0,0,48,0\n"
          "persistence,17,0,0,0,48,0\n"
          "persistence,all,0,0,0,1152,0\n");
}

TEST_CASE("train, predict and evaluate every model kind") {
    const fs::path d = scratch_dir("cli_kinds");
    write_file(d / "synth.cfg", kSynth);
    REQUIRE(cli({"synth", "--spec", (d / "synth.cfg").string(), "--out", (d / "data.txt").string()}).code == 0);
    std::vector<std::string> eval_args{"evaluate", "--data", (d / "data.txt").string(), "--hours", "9,17",
                                       "--out", (d / "m.csv").string(), "--model", "persistence"};
    for (const std::string kind : {"deepstcl", "clc", "clp", "clt", "lstm", "cnn"}) {
        write_file(d / "run.cfg", train_config("deepstcl", 1));
        const fs::path model = d / kind;
        const CliRun t = cli({"train", "--data", (d / "data.txt").string(), "--config", (d / "run.cfg").string(),
                              "--model-out", model.string(), "--kind", kind});
        REQUIRE_MESSAGE(t.code == 0, t.err);
        CHECK(t.out.rfind("epoch,train_loss,val_loss\n1,", 0) == 0);
        eval_args.push_back("--model");
        eval_args.push_back(model.string());

        const CliRun p = cli({"predict", "--model", model.string(), "--data", (d / "data.txt").string(), "--at",
                              "240", "--out", (d / "pred.txt").string()});
        REQUIRE_MESSAGE(p.code == 0, p.err);
        const stcl::DemandSeries pred = stcl::read_snapshot_stream(d / "pred.txt");
        CHECK(pred.size() == 1);
        CHECK(pred.t0() == 1477958400 + 240 * 3600);
        for (double v : pred.counts(0).values()) CHECK(v >= 0.0);
    }
    const CliRun e = cli(eval_args);
    REQUIRE_MESSAGE(e.code == 0, e.err);
    const std::string csv = read_file(d / "m.csv");
    for (const char* kind : {"persistence,9", "deepstcl,all", "clc,9", "clp,17", "clt,all", "lstm,9", "cnn,all"})
        CHECK(csv.find(kind) != std::string::npos);
}

TEST_CASE("predict time parsing") {
    const fs::path d = scratch_dir("cli_at");
    write_file(d / "synth.cfg", kSynth);
    write_file(d / "run.cfg", train_config("clc", 1));
    write_file(d / "run0.cfg", train_config("clc", 0));
    REQUIRE(cli({"synth", "--spec", (d / "synth.cfg").string(), "--out", (d / "data.txt").string()}).code == 0);
    REQUIRE(cli({"train", "--data", (d / "data.txt").string(), "--config", (d / "run.cfg").string(),
                 "--model-out", (d / "m").string()}).code == 0);
    // An untrained bundle has no batch-norm statistics to infer with.
    REQUIRE(cli({"train", "--data", (d / "data.txt").string(), "--config", (d / "run0.cfg").string(),
                 "--model-out", (d / "m0").string()}).code == 0);
    const CliRun untrained = cli({"predict", "--model", (d / "m0").string(), "--data", (d / "data.txt").string(),
                                  "--at", "100", "--out", (d / "u.txt").string()});
    CHECK(untrained.code == 2);
    CHECK(untrained.err.find("statistics") != std::string::npos);
    auto predict = [&](const std::string& at, const std::string& out) {
        return cli({"predict", "--model", (d / "m").string(), "--data", (d / "data.txt").string(), "--at", at,
                    "--out", (d / out).string()});
    };
    REQUIRE(predict("100", "a.txt").code == 0);
    REQUIRE(predict("2016-11-05 04:00:00", "b.txt").code == 0);  // bucket 100
    CHECK(read_file(d / "a.txt") == read_file(d / "b.txt"));
    CHECK(predict("2016-11-05 04:30:00", "c.txt").code == 2);
    CHECK(predict("241", "c.txt").code == 2);
    CHECK(predict("1", "c.txt").code == 2);  // not enough history
    CHECK(predict("soon", "c.txt").code == 1);
}

TEST_CASE("grid mismatch is a data error with both shapes") {
    const fs::path d = scratch_dir("cli_shape");
    write_file(d / "synth.cfg", kSynth);
    REQUIRE(cli({"synth", "--spec", (d / "synth.cfg").string(), "--out", (d / "data.txt").string()}).code == 0);
    write_file(d / "run8.cfg", train_config("clc", 0, 8));
    const CliRun t = cli({"train", "--data", (d / "data.txt").string(), "--config", (d / "run8.cfg").string(),
                          "--model-out", (d / "m8").string()});
    CHECK(t.code == 2);
    CHECK(t.err.find("8x8") != std::string::npos);
    CHECK(t.err.find("4x4") != std::string::npos);

    // A 4x4 model evaluated against 8x8 data.
    write_file(d / "run.cfg", train_config("clc", 0));
    REQUIRE(cli({"train", "--data", (d / "data.txt").string(), "--config", (d / "run.cfg").string(),
                 "--model-out", (d / "m4").string()}).code == 0);
    write_file(d / "synth8.cfg", "[synthetic]\nrows = 8\ncols = 8\nbuckets = 240\n");
    REQUIRE(cli({"synth", "--spec", (d / "synth8.cfg").string(), "--out", (d / "data8.txt").string()}).code == 0);
    const CliRun e = cli({"evaluate", "--model", (d / "m4").string(), "--data", (d / "data8.txt").string(),
                          "--out", (d / "m.csv").string()});
    CHECK(e.code == 2);
    CHECK(e.err.find("4x4") != std::string::npos);
    CHECK(e.err.find("8x8") != std::string::npos);
    CHECK_FALSE(fs::exists(d / "m.csv"));
}

TEST_CASE("persistence cannot be trained") {
    const fs::path d = scratch_dir("cli_persist");
    write_file(d / "synth.cfg", kSynth);
    write_file(d / "run.cfg", train_config("persistence", 1));
    REQUIRE(cli({"synth", "--spec", (d / "synth.cfg").string(), "--out", (d / "data.txt").string()}).code == 0);
    CHECK(cli({"train", "--data", (d / "data.txt").string(), "--config", (d / "run.cfg").string(),
               "--model-out", (d / "m").string()}).code == 1);
}

TEST_CASE("pipeline is deterministic and leaves inputs untouched") {
    const fs::path d = scratch_dir("cli_det");
    write_file(d / "synth.cfg", kSynth);
    write_file(d / "run.cfg", train_config("deepstcl", 2));
    std::string metrics[2];
    for (int i = 0; i < 2; ++i) {
        const std::string tag = std::to_string(i);
        REQUIRE(cli({"synth", "--spec", (d / "synth.cfg").string(), "--out", (d / ("data" + tag)).string()}).code == 0);
        const std::string data_before = read_file(d / ("data" + tag));
        REQUIRE(cli({"train", "--data", (d / ("data" + tag)).string(), "--config", (d / "run.cfg").string(),
                     "--model-out", (d / ("m" + tag)).string()}).code == 0);
        REQUIRE(cli({"evaluate", "--model", (d / ("m" + tag)).string(), "--data", (d / ("data" + tag)).string(),
                     "--out", (d / ("e" + tag)).string()}).code == 0);
        CHECK(read_file(d / ("data" + tag)) == data_before);
        metrics[i] = read_file(d / ("e" + tag));
    }
    CHECK(metrics[0] == metrics[1]);
    CHECK(read_file(d / "data0") == read_file(d / "data1"));
    CHECK(read_file(d / "m0" / "history.csv") == read_file(d / "m1" / "history.csv"));
}

TEST_CASE("sweep writes one row per size and hour") {
    const fs::path d = scratch_dir("cli_sweep");
    write_file(d / "synth.cfg",
               "[synthetic]\nlat_min = 30.6\nlat_max = 30.62\nlng_min = 104\nlng_max = 104.023237\n"
               "rows = 4\ncols = 4\nbuckets = 240\n");
    REQUIRE(cli({"synth", "--spec", (d / "synth.cfg").string(), "--out", (d / "data.txt").string(), "--orders",
                 (d / "orders.csv").string()}).code == 0);
    write_file(d / "run.cfg", "[grid]\nlat_min = 30.6\nlat_max = 30.62\nlng_min = 104\nlng_max = 104.023237\n" +
                                  train_config("clc", 1).substr(7));
    const CliRun r = cli({"sweep", "--orders", (d / "orders.csv").string(), "--config", (d / "run.cfg").string(),
                          "--sizes", "1.2365,7", "--hours", "9", "--out", (d / "s.csv").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::string csv = read_file(d / "s.csv");
    CHECK(csv.rfind("area_km2,grid_rows,hour,rmse,train_seconds\n1.2365,2,9,", 0) == 0);
    CHECK(csv.find("\n1.2365,2,all,") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // 7 km2 does not tile the box
}
