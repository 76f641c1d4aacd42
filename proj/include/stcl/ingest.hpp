#pragma once

#include "stcl/grid.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stcl {

struct OrderRecord {
    std::string order_id;
    double pickup_time = 0.0;  // epoch seconds, UTC
    double pickup_lat = 0.0;
    double pickup_lng = 0.0;
};

// Header names of the columns to read. Other columns (drop-off, billing end,
// ...) are accepted and ignored.
struct ColumnSchema {
    std::string order_id = "order_id";
    std::string pickup_time = "pickup_time";
    std::string pickup_lng = "pickup_lng";
    std::string pickup_lat = "pickup_lat";
};

struct MalformedLine {
    std::size_t line_number = 0;
    std::string reason;
};

struct IngestReport {
    std::size_t records_read = 0;
    std::size_t records_binned = 0;
    // Outside the bounding box or outside [t_start, t_end).
    std::size_t records_out_of_bounds = 0;
    std::size_t records_malformed = 0;
    // Subset of records_out_of_bounds rejected for time alone.
    std::size_t records_outside_time_window = 0;
    std::optional<std::pair<double, double>> time_range;

    bool consistent() const {
        return records_read == records_binned + records_out_of_bounds + records_malformed;
    }
};

void write_report(const IngestReport& report, std::ostream& out);

// Parses "YYYY-MM-DD HH:MM:SS" (UTC) or a plain decimal epoch-seconds value.
std::optional<double> parse_timestamp(std::string_view text);

// Lazy reader over a delimited order file. The header line fixes the
// delimiter (tab if it contains one, else comma) and the column positions.
// Lines with the wrong field count or unparseable numbers/times are skipped
// and logged, never fatal. Blank lines are ignored.
class OrderReader {
public:
    // Throws DataError if the header is missing or lacks a mapped column.
    OrderReader(std::istream& in, ColumnSchema schema = {});

    std::optional<OrderRecord> next();

    std::size_t lines_read() const { return lines_read_; }
    const std::vector<MalformedLine>& malformed() const { return malformed_; }
    char delimiter() const { return delim_; }

private:
    std::istream& in_;
    char delim_ = ',';
    std::size_t field_count_ = 0;
    std::size_t col_id_ = 0, col_time_ = 0, col_lat_ = 0, col_lng_ = 0;
    std::size_t line_no_ = 1;
    std::size_t lines_read_ = 0;
    std::vector<MalformedLine> malformed_;
    std::vector<std::string_view> fields_;
    std::string line_;
};

OrderReader parse_orders(std::istream& in, ColumnSchema schema = {});

struct BinningResult {
    DemandSeries series;
    IngestReport report;
};

// Counts records per (bucket, cell). Bucket k is
// [t_start + k * bucket_seconds, t_start + (k + 1) * bucket_seconds) and the
// series has ceil((t_end - t_start) / bucket_seconds) buckets. Empty cells are
// zero. `malformed` is carried into the report unchanged.
BinningResult bin_orders(std::span<const OrderRecord> records, const GridSpec& grid,
                         std::int64_t bucket_seconds, std::int64_t t_start, std::int64_t t_end,
                         std::size_t malformed = 0);

// Bucket-aligned window covering every record: start is floored to a bucket
// boundary, end is one bucket past the last record.
std::pair<std::int64_t, std::int64_t> covering_window(std::span<const OrderRecord> records,
                                                      std::int64_t bucket_seconds);

}  // namespace stcl
