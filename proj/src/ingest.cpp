#include "stcl/ingest.hpp"

#include "stcl/errors.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace stcl {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
    return s;
}

void split(std::string_view line, char delim, std::vector<std::string_view>& out) {
    out.clear();
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(delim, start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            return;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
}

std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
    Int v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace

void write_report(const IngestReport& report, std::ostream& out) {
    out << "records_read=" << report.records_read << '\n'
        << "records_binned=" << report.records_binned << '\n'
        << "records_out_of_bounds=" << report.records_out_of_bounds << '\n'
        << "records_malformed=" << report.records_malformed << '\n'
        << "records_outside_time_window=" << report.records_outside_time_window << '\n';
    if (report.time_range) {
        out << "time_min=" << static_cast<std::int64_t>(std::floor(report.time_range->first)) << '\n'
            << "time_max=" << static_cast<std::int64_t>(std::floor(report.time_range->second)) << '\n';
    } else {
        out << "time_min=none\ntime_max=none\n";
    }
}

std::optional<double> parse_timestamp(std::string_view text) {
    text = trim(text);
    if (text.size() == 19 && text[4] == '-' && text[7] == '-' && (text[10] == ' ' || text[10] == 'T') &&
        text[13] == ':' && text[16] == ':') {
        auto y = parse_int<int>(text.substr(0, 4));
        auto mo = parse_int<unsigned>(text.substr(5, 2));
        auto d = parse_int<unsigned>(text.substr(8, 2));
        auto h = parse_int<int>(text.substr(11, 2));
        auto mi = parse_int<int>(text.substr(14, 2));
        auto s = parse_int<int>(text.substr(17, 2));
        if (!y || !mo || !d || !h || !mi || !s) return std::nullopt;
        if (*h > 23 || *mi > 59 || *s > 60) return std::nullopt;
        using namespace std::chrono;
        const year_month_day ymd{year{*y}, month{*mo}, day{*d}};
        if (!ymd.ok()) return std::nullopt;
        const auto days = sys_days{ymd}.time_since_epoch().count();
        return static_cast<double>(days) * 86400.0 + *h * 3600.0 + *mi * 60.0 + *s;
    }
    return parse_double(text);
}

OrderReader::OrderReader(std::istream& in, ColumnSchema schema) : in_(in) {
    std::string header;
    if (!std::getline(in_, header)) throw DataError("order file has no header line");
    delim_ = header.find('\t') != std::string::npos ? '\t' : ',';
    std::vector<std::string_view> names;
    split(header, delim_, names);
    field_count_ = names.size();

    auto find = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == name) return i;
        }
        throw DataError("order file header lacks column '" + name + "'");
    };
    col_id_ = find(schema.order_id);
    col_time_ = find(schema.pickup_time);
    col_lat_ = find(schema.pickup_lat);
    col_lng_ = find(schema.pickup_lng);
}

std::optional<OrderRecord> OrderReader::next() {
    while (std::getline(in_, line_)) {
        ++line_no_;
        if (trim(line_).empty()) continue;
        ++lines_read_;
        split(line_, delim_, fields_);
        if (fields_.size() != field_count_) {
            malformed_.push_back({line_no_, "expected " + std::to_string(field_count_) +
                                                " fields, found " + std::to_string(fields_.size())});
            continue;
        }
        auto t = parse_timestamp(fields_[col_time_]);
        auto lat = parse_double(fields_[col_lat_]);
        auto lng = parse_double(fields_[col_lng_]);
        if (!t) {
            malformed_.push_back({line_no_, "unparseable pickup time"});
            continue;
        }
        if (!lat || !lng) {
            malformed_.push_back({line_no_, "unparseable coordinate"});
            continue;
        }
        return OrderRecord{std::string(fields_[col_id_]), *t, *lat, *lng};
    }
    if (in_.bad()) throw DataError("read error in order file");
    return std::nullopt;
}

OrderReader parse_orders(std::istream& in, ColumnSchema schema) {
    return OrderReader(in, std::move(schema));
}

BinningResult bin_orders(std::span<const OrderRecord> records, const GridSpec& grid,
                         std::int64_t bucket_seconds, std::int64_t t_start, std::int64_t t_end,
                         std::size_t malformed) {
    grid.validate();
    if (bucket_seconds <= 0) throw std::invalid_argument("bin_orders: bucket duration must be > 0");
    if (!(t_start < t_end)) throw std::invalid_argument("bin_orders: t_start must precede t_end");

    const auto span = t_end - t_start;
    const auto buckets = static_cast<std::size_t>((span + bucket_seconds - 1) / bucket_seconds);
    std::vector<Tensor> counts(buckets, Tensor(Shape{grid.rows, grid.cols}));

    IngestReport report;
    report.records_malformed = malformed;
    report.records_read = records.size() + malformed;
    for (const auto& r : records) {
        if (!report.time_range) {
            report.time_range = std::pair{r.pickup_time, r.pickup_time};
        } else {
            report.time_range->first = std::min(report.time_range->first, r.pickup_time);
            report.time_range->second = std::max(report.time_range->second, r.pickup_time);
        }
        const auto cell = locate(grid, r.pickup_lat, r.pickup_lng);
        const bool in_window = r.pickup_time >= static_cast<double>(t_start) &&
                               r.pickup_time < static_cast<double>(t_end);
        if (!in_window || !cell) {
            ++report.records_out_of_bounds;
            if (!in_window && cell) ++report.records_outside_time_window;
            continue;
        }
        const auto k = static_cast<std::size_t>(
            std::floor((r.pickup_time - static_cast<double>(t_start)) / static_cast<double>(bucket_seconds)));
        counts[k][cell->row * grid.cols + cell->col] += 1.0;
        ++report.records_binned;
    }
    if (!report.consistent()) throw InvariantError("ingest report counts do not add up");
    return {DemandSeries(grid, bucket_seconds, t_start, std::move(counts)), report};
}

std::pair<std::int64_t, std::int64_t> covering_window(std::span<const OrderRecord> records,
                                                      std::int64_t bucket_seconds) {
    if (records.empty()) throw DataError("cannot derive a time window from zero records");
    double lo = records.front().pickup_time, hi = lo;
    for (const auto& r : records) {
        lo = std::min(lo, r.pickup_time);
        hi = std::max(hi, r.pickup_time);
    }
    const auto b = static_cast<double>(bucket_seconds);
    const auto start = static_cast<std::int64_t>(std::floor(lo / b)) * bucket_seconds;
    const auto end = (static_cast<std::int64_t>(std::floor(hi / b)) + 1) * bucket_seconds;
    return {start, end};
}

}  // namespace stcl
