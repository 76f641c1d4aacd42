#include "stcl/config.hpp"

#include "stcl/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace stcl {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

IniFile IniFile::parse(std::istream& in, const std::string& source) {
    IniFile ini;
    ini.source_ = source;
    std::string line, section;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        // Whole-line comments only, so ';' can appear inside values.
        const std::string text = trim(line);
        if (text.empty() || text.front() == '#' || text.front() == ';') continue;
        if (text.front() == '[') {
            if (text.back() != ']' || text.size() < 3)
                throw ConfigError(source + ":" + std::to_string(n) + ": malformed section header");
            section = trim(std::string_view(text).substr(1, text.size() - 2));
            ini.sections_[section];
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source + ":" + std::to_string(n) + ": expected key = value");
        if (section.empty())
            throw ConfigError(source + ":" + std::to_string(n) + ": key outside any section");
        const std::string key = trim(std::string_view(text).substr(0, eq));
        if (key.empty()) throw ConfigError(source + ":" + std::to_string(n) + ": empty key");
        auto& sec = ini.sections_[section];
        if (sec.count(key))
            throw ConfigError(source + ":" + std::to_string(n) + ": duplicate key [" + section + "] " + key);
        sec[key] = Entry{trim(std::string_view(text).substr(eq + 1)), n, false};
    }
    return ini;
}

IniFile IniFile::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    return parse(in, path.string());
}

const IniFile::Entry* IniFile::find(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
}

bool IniFile::has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
}

void IniFile::fail(const std::string& section, const std::string& key, const std::string& what) const {
    const Entry* e = find(section, key);
    throw ConfigError(source_ + ":" + std::to_string(e ? e->line : 0) + ": [" + section + "] " + key +
                      ": " + what);
}

std::optional<std::string> IniFile::get(const std::string& section, const std::string& key) {
    const Entry* e = find(section, key);
    if (!e) return std::nullopt;
    e->used = true;
    return e->value;
}

std::optional<double> IniFile::get_double(const std::string& section, const std::string& key) {
    const auto s = get(section, key);
    if (!s) return std::nullopt;
    double v = 0;
    const auto [p, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc() || p != s->data() + s->size() || !std::isfinite(v))
        fail(section, key, "expected a number, got '" + *s + "'");
    return v;
}

std::optional<std::int64_t> IniFile::get_int(const std::string& section, const std::string& key) {
    const auto s = get(section, key);
    if (!s) return std::nullopt;
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc() || p != s->data() + s->size())
        fail(section, key, "expected an integer, got '" + *s + "'");
    return v;
}

std::optional<std::size_t> IniFile::get_size(const std::string& section, const std::string& key) {
    const auto v = get_int(section, key);
    if (!v) return std::nullopt;
    if (*v < 0) fail(section, key, "must not be negative");
    return static_cast<std::size_t>(*v);
}

std::optional<bool> IniFile::get_bool(const std::string& section, const std::string& key) {
    const auto s = get(section, key);
    if (!s) return std::nullopt;
    if (*s == "true" || *s == "1" || *s == "yes") return true;
    if (*s == "false" || *s == "0" || *s == "no") return false;
    fail(section, key, "expected true or false, got '" + *s + "'");
}

std::optional<std::int64_t> IniFile::get_time(const std::string& section, const std::string& key) {
    const auto s = get(section, key);
    if (!s) return std::nullopt;
    const auto t = parse_timestamp(*s);
    if (!t || std::floor(*t) != *t) fail(section, key, "expected a whole-second time, got '" + *s + "'");
    return static_cast<std::int64_t>(*t);
}

void IniFile::finish() const {
    for (const auto& [section, keys] : sections_) {
        for (const auto& [key, e] : keys)
            if (!e.used)
                throw ConfigError(source_ + ":" + std::to_string(e.line) + ": unknown key [" + section +
                                  "] " + key);
    }
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        int v = 0;
        const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (t.empty() || ec != std::errc() || p != t.data() + t.size())
            throw ConfigError("bad integer list '" + text + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("empty integer list");
    return out;
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        double v = 0;
        const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (t.empty() || ec != std::errc() || p != t.data() + t.size())
            throw ConfigError("bad number list '" + text + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("empty number list");
    return out;
}

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::deepstcl: return "deepstcl";
        case ModelKind::clc: return "clc";
        case ModelKind::clp: return "clp";
        case ModelKind::clt: return "clt";
        case ModelKind::lstm: return "lstm";
        case ModelKind::cnn: return "cnn";
        case ModelKind::persistence: return "persistence";
    }
    throw InvariantError("unknown model kind");
}

ModelKind parse_model_kind(const std::string& name) {
    for (ModelKind k : {ModelKind::deepstcl, ModelKind::clc, ModelKind::clp, ModelKind::clt,
                        ModelKind::lstm, ModelKind::cnn, ModelKind::persistence})
        if (to_string(k) == name) return k;
    throw ConfigError("unknown model kind '" + name +
                      "' (expected deepstcl, clc, clp, clt, lstm, cnn or persistence)");
}

void RunConfig::validate() const {
    try {
        grid.validate();
        sampling.validate();
        network.validate();
        lstm.validate();
        cnn.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (ingest.bucket_seconds <= 0) throw ConfigError("bucket_seconds must be positive");
    if (ingest.t_start && ingest.t_end && *ingest.t_start >= *ingest.t_end)
        throw ConfigError("t_start must precede t_end");
    if (train.batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(train.adam.lr > 0)) throw ConfigError("lr must be positive");
    if (!(train.adam.beta1 >= 0 && train.adam.beta1 < 1 && train.adam.beta2 >= 0 && train.adam.beta2 < 1))
        throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(train.adam.eps > 0)) throw ConfigError("Adam eps must be positive");
    if (!(train.lr_decay > 0 && train.lr_decay <= 1)) throw ConfigError("lr_decay must lie in (0, 1]");
    if (!(train.val_fraction >= 0 && train.val_fraction < 1))
        throw ConfigError("val_fraction must lie in [0, 1)");
    for (int h : eval.hours)
        if (h < 0 || h > 23) throw ConfigError("evaluation hours must lie in 0..23");
}

RunConfig RunConfig::parse(std::istream& in, const std::string& source) {
    IniFile ini = IniFile::parse(in, source);
    RunConfig c;
    auto set = [](auto& field, const auto& v) {
        if (v) field = static_cast<std::remove_reference_t<decltype(field)>>(*v);
    };
    set(c.grid.lat_min, ini.get_double("grid", "lat_min"));
    set(c.grid.lat_max, ini.get_double("grid", "lat_max"));
    set(c.grid.lng_min, ini.get_double("grid", "lng_min"));
    set(c.grid.lng_max, ini.get_double("grid", "lng_max"));
    set(c.grid.rows, ini.get_size("grid", "rows"));
    set(c.grid.cols, ini.get_size("grid", "cols"));

    set(c.ingest.bucket_seconds, ini.get_int("ingest", "bucket_seconds"));
    if (auto v = ini.get_time("ingest", "t_start")) c.ingest.t_start = *v;
    if (auto v = ini.get_time("ingest", "t_end")) c.ingest.t_end = *v;
    set(c.ingest.columns.order_id, ini.get("ingest", "order_id_column"));
    set(c.ingest.columns.pickup_time, ini.get("ingest", "time_column"));
    set(c.ingest.columns.pickup_lat, ini.get("ingest", "lat_column"));
    set(c.ingest.columns.pickup_lng, ini.get("ingest", "lng_column"));

    if (auto v = ini.get("model", "kind")) c.model = parse_model_kind(*v);

    set(c.sampling.closeness_len, ini.get_size("sampling", "closeness"));
    set(c.sampling.period_len, ini.get_size("sampling", "period"));
    set(c.sampling.trend_len, ini.get_size("sampling", "trend"));
    set(c.sampling.period_stride, ini.get_size("sampling", "period_stride"));
    set(c.sampling.trend_stride, ini.get_size("sampling", "trend_stride"));

    set(c.network.hidden, ini.get_size("network", "hidden"));
    set(c.network.kernel, ini.get_size("network", "kernel"));
    set(c.network.dropout, ini.get_double("network", "dropout"));
    set(c.network.output_kt, ini.get_size("network", "output_kt"));
    set(c.network.bn_momentum, ini.get_double("network", "bn_momentum"));

    set(c.lstm.hidden_size, ini.get_size("lstm", "hidden"));
    set(c.lstm.lookback, ini.get_size("lstm", "lookback"));
    set(c.lstm.dropout, ini.get_double("lstm", "dropout"));

    set(c.cnn.filters1, ini.get_size("cnn", "filters1"));
    set(c.cnn.filters2, ini.get_size("cnn", "filters2"));
    set(c.cnn.kernel, ini.get_size("cnn", "kernel"));
    set(c.cnn.bn_momentum, ini.get_double("cnn", "bn_momentum"));

    set(c.train.adam.lr, ini.get_double("train", "lr"));
    set(c.train.adam.beta1, ini.get_double("train", "beta1"));
    set(c.train.adam.beta2, ini.get_double("train", "beta2"));
    set(c.train.adam.eps, ini.get_double("train", "eps"));
    set(c.train.lr_decay, ini.get_double("train", "lr_decay"));
    set(c.train.batch_size, ini.get_size("train", "batch_size"));
    set(c.train.epochs, ini.get_size("train", "epochs"));
    set(c.train.patience, ini.get_size("train", "patience"));
    set(c.train.val_fraction, ini.get_double("train", "val_fraction"));
    set(c.train.restore_best, ini.get_bool("train", "restore_best"));
    set(c.train.first_target, ini.get_size("train", "first_target"));
    if (auto v = ini.get_int("train", "seed")) {
        if (*v < 0) throw ConfigError(source + ": [train] seed must not be negative");
        c.seed = static_cast<std::uint64_t>(*v);
    }

    set(c.eval.test_days, ini.get_size("eval", "test_days"));
    if (auto v = ini.get("eval", "hours")) c.eval.hours = parse_int_list(*v);

    ini.finish();
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    return parse(in, path.string());
}

void RunConfig::write(std::ostream& out) const {
    out << "[grid]\n"
        << "lat_min = " << fmt(grid.lat_min) << "\nlat_max = " << fmt(grid.lat_max)
        << "\nlng_min = " << fmt(grid.lng_min) << "\nlng_max = " << fmt(grid.lng_max)
        << "\nrows = " << grid.rows << "\ncols = " << grid.cols << "\n\n";
    out << "[ingest]\nbucket_seconds = " << ingest.bucket_seconds << '\n';
    if (ingest.t_start) out << "t_start = " << *ingest.t_start << '\n';
    if (ingest.t_end) out << "t_end = " << *ingest.t_end << '\n';
    out << "order_id_column = " << ingest.columns.order_id << "\ntime_column = " << ingest.columns.pickup_time
        << "\nlat_column = " << ingest.columns.pickup_lat << "\nlng_column = " << ingest.columns.pickup_lng
        << "\n\n";
    out << "[model]\nkind = " << to_string(model) << "\n\n";
    out << "[sampling]\ncloseness = " << sampling.closeness_len << "\nperiod = " << sampling.period_len
        << "\ntrend = " << sampling.trend_len << "\nperiod_stride = " << sampling.period_stride
        << "\ntrend_stride = " << sampling.trend_stride << "\n\n";
    out << "[network]\nhidden = " << network.hidden << "\nkernel = " << network.kernel
        << "\ndropout = " << fmt(network.dropout) << "\noutput_kt = " << network.output_kt
        << "\nbn_momentum = " << fmt(network.bn_momentum) << "\n\n";
    out << "[lstm]\nhidden = " << lstm.hidden_size << "\nlookback = " << lstm.lookback
        << "\ndropout = " << fmt(lstm.dropout) << "\n\n";
    out << "[cnn]\nfilters1 = " << cnn.filters1 << "\nfilters2 = " << cnn.filters2 << "\nkernel = " << cnn.kernel
        << "\nbn_momentum = " << fmt(cnn.bn_momentum) << "\n\n";
    out << "[train]\nlr = " << fmt(train.adam.lr) << "\nbeta1 = " << fmt(train.adam.beta1)
        << "\nbeta2 = " << fmt(train.adam.beta2) << "\neps = " << fmt(train.adam.eps)
        << "\nlr_decay = " << fmt(train.lr_decay)
        << "\nbatch_size = " << train.batch_size << "\nepochs = " << train.epochs
        << "\npatience = " << train.patience << "\nval_fraction = " << fmt(train.val_fraction)
        << "\nrestore_best = " << (train.restore_best ? "true" : "false")
        << "\nfirst_target = " << train.first_target << "\nseed = " << seed << "\n\n";
    out << "[eval]\ntest_days = " << eval.test_days << "\nhours = ";
    for (std::size_t i = 0; i < eval.hours.size(); ++i) out << (i ? "," : "") << eval.hours[i];
    out << '\n';
}

void RunConfig::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write config " + path.string());
    write(out);
}

SynthConfig parse_synth_config(std::istream& in, const std::string& source) {
    IniFile ini = IniFile::parse(in, source);
    SynthConfig c;
    SyntheticSpec& s = c.spec;
    const std::string sec = "synthetic";
    auto set = [](auto& field, const auto& v) {
        if (v) field = static_cast<std::remove_reference_t<decltype(field)>>(*v);
    };
    set(s.grid.lat_min, ini.get_double(sec, "lat_min"));
    set(s.grid.lat_max, ini.get_double(sec, "lat_max"));
    set(s.grid.lng_min, ini.get_double(sec, "lng_min"));
    set(s.grid.lng_max, ini.get_double(sec, "lng_max"));
    set(s.grid.rows, ini.get_size(sec, "rows"));
    set(s.grid.cols, ini.get_size(sec, "cols"));
    set(s.buckets, ini.get_size(sec, "buckets"));
    set(s.bucket_seconds, ini.get_int(sec, "bucket_seconds"));
    if (auto v = ini.get_time(sec, "t0")) s.t0 = *v;
    set(s.base, ini.get_double(sec, "base"));
    set(s.daily, ini.get_double(sec, "daily"));
    set(s.weekly, ini.get_double(sec, "weekly"));
    set(s.phase_spread, ini.get_double(sec, "phase_spread"));
    set(s.hotspot_width, ini.get_double(sec, "hotspot_width"));
    set(s.noise_sigma, ini.get_double(sec, "noise_sigma"));
    if (auto v = ini.get_size(sec, "seed")) s.seed = *v;
    if (auto v = ini.get_size(sec, "orders_seed")) c.orders_seed = *v;
    if (auto v = ini.get(sec, "hotspots")) {
        // "row col amplitude" triples separated by ';'
        std::stringstream ss(*v);
        std::string item;
        while (std::getline(ss, item, ';')) {
            if (trim(item).empty()) continue;
            std::istringstream is(item);
            Hotspot h;
            std::string extra;
            if (!(is >> h.row >> h.col >> h.amplitude) || (is >> extra))
                throw ConfigError(source + ": hotspots must be 'row col amplitude' triples separated by ';'");
            s.hotspots.push_back(h);
        }
    }
    ini.finish();
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return c;
}

SynthConfig load_synth_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read spec " + path.string());
    return parse_synth_config(in, path.string());
}

}  // namespace stcl
