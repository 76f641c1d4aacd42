#pragma once

#include "stcl/baselines.hpp"
#include "stcl/deepstcl.hpp"
#include "stcl/grid.hpp"
#include "stcl/ingest.hpp"
#include "stcl/synthetic.hpp"
#include "stcl/training.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stcl {

// Sectioned key = value text. '#' and ';' start comments; keys are unique per
// section. Every key must be read through a getter before finish(), which
// rejects whatever is left over as unknown.
class IniFile {
public:
    static IniFile parse(std::istream& in, const std::string& source);
    static IniFile load(const std::filesystem::path& path);

    bool has(const std::string& section, const std::string& key) const;
    std::optional<std::string> get(const std::string& section, const std::string& key);
    std::optional<double> get_double(const std::string& section, const std::string& key);
    std::optional<std::int64_t> get_int(const std::string& section, const std::string& key);
    std::optional<std::size_t> get_size(const std::string& section, const std::string& key);
    std::optional<bool> get_bool(const std::string& section, const std::string& key);
    // Epoch seconds or "YYYY-MM-DD HH:MM:SS".
    std::optional<std::int64_t> get_time(const std::string& section, const std::string& key);

    void finish() const;

private:
    struct Entry {
        std::string value;
        std::size_t line = 0;
        mutable bool used = false;
    };
    [[noreturn]] void fail(const std::string& section, const std::string& key,
                           const std::string& what) const;
    const Entry* find(const std::string& section, const std::string& key) const;

    std::string source_;
    std::map<std::string, std::map<std::string, Entry>> sections_;
};

enum class ModelKind { deepstcl, clc, clp, clt, lstm, cnn, persistence };

std::string to_string(ModelKind kind);
// Throws ConfigError for an unknown name.
ModelKind parse_model_kind(const std::string& name);

struct IngestConfig {
    std::int64_t bucket_seconds = 3600;
    std::optional<std::int64_t> t_start;  // default: covering window of the data
    std::optional<std::int64_t> t_end;
    ColumnSchema columns;
};

struct EvalConfig {
    std::size_t test_days = 3;
    std::vector<int> hours{6, 9, 12, 15, 17, 20, 23};
};

struct RunConfig {
    GridSpec grid{30.60, 30.70, 104.00, 104.10, 8, 8};
    IngestConfig ingest;
    ModelKind model = ModelKind::deepstcl;
    SamplingConfig sampling;
    NetworkConfig network;
    LSTMCellConfig lstm;
    CNNConfig cnn;
    TrainConfig train;
    std::uint64_t seed = 1;
    EvalConfig eval;

    void validate() const;

    static RunConfig parse(std::istream& in, const std::string& source = "<config>");
    static RunConfig load(const std::filesystem::path& path);
    // Writes every key, so parse(write(c)) reproduces c.
    void write(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;
};

// [synthetic] section: grid and generator settings plus orders_seed for the
// optional order-level export.
struct SynthConfig {
    SyntheticSpec spec;
    std::uint64_t orders_seed = 7;
};

SynthConfig load_synth_config(const std::filesystem::path& path);
SynthConfig parse_synth_config(std::istream& in, const std::string& source = "<spec>");

std::vector<int> parse_int_list(const std::string& text);
std::vector<double> parse_double_list(const std::string& text);

}  // namespace stcl
