#ifndef AITRACE_FLOW_HPP
#define AITRACE_FLOW_HPP

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aitrace/time.hpp"

namespace aitrace {

/// IPv4 address used purely as a device identifier inside the study network.
class Ipv4Address {
public:
    constexpr Ipv4Address() = default;
    constexpr explicit Ipv4Address(std::uint32_t host_order) : value_(host_order) {}

    /// Strict dotted-quad parse; no leading zeros beyond a lone "0".
    static std::optional<Ipv4Address> parse(std::string_view text);

    constexpr std::uint32_t value() const { return value_; }
    std::string to_string() const;

    /// True when the address lies in 10.0.0.0/8.
    constexpr bool in_study_subnet() const { return (value_ >> 24) == 10u; }

    friend constexpr auto operator<=>(Ipv4Address, Ipv4Address) = default;

private:
    std::uint32_t value_ = 0;
};

/// One metadata-only flow observation. There is deliberately no payload field.
struct FlowRecord {
    Instant timestamp{};
    Ipv4Address device_ip{};
    std::string hostname;
    std::int64_t up_bytes = 0;
    std::int64_t down_bytes = 0;

    std::int64_t total_bytes() const { return up_bytes + down_bytes; }

    friend bool operator==(const FlowRecord&, const FlowRecord&) = default;
};

enum class Violation {
    OutsidePrivateStudySubnet,
    EmptyHostname,
    HostnameWhitespace,
    HostnameNotLowercase,
    NegativeVolume,
};

std::string_view to_string(Violation v);

/// Empty result means the record is valid.
std::vector<Violation> validate_record(const FlowRecord& r);

/// Lowercases and strips trailing dots.
std::string normalize_hostname(std::string_view host);

/// Records sorted non-decreasing by timestamp; immutable once built.
class FlowLog {
public:
    FlowLog() = default;
    /// Stable-sorts `records` by timestamp.
    explicit FlowLog(std::vector<FlowRecord> records, std::string source_label = {});

    const std::vector<FlowRecord>& records() const { return records_; }
    const std::string& source_label() const { return source_label_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    auto begin() const { return records_.begin(); }
    auto end() const { return records_.end(); }

    /// Merges several logs; ties keep the order of `logs`.
    static FlowLog merge(const std::vector<FlowLog>& logs, std::string source_label = {});

private:
    std::vector<FlowRecord> records_;
    std::string source_label_;
};

enum class FlowFormat { Csv, Jsonl };

/// Chooses a format from a path suffix (`.jsonl` → Jsonl, otherwise Csv).
FlowFormat format_for_path(std::string_view path);

inline constexpr std::string_view kFlowCsvHeader = "timestamp,device_ip,hostname,up_bytes,down_bytes";

struct LineError {
    std::size_t line_no = 0;  // 1-based physical line number
    std::string reason;
};

class MalformedHeader : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown in strict mode on the first rejected line.
class LineErrorException : public std::runtime_error {
public:
    explicit LineErrorException(LineError e)
        : std::runtime_error("line " + std::to_string(e.line_no) + ": " + e.reason), error(std::move(e)) {}
    LineError error;
};

struct ParseOptions {
    bool strict = false;
    std::string source_label;
};

struct ParseResult {
    FlowLog log;
    std::vector<LineError> diagnostics;
    std::size_t input_lines = 0;  // non-blank data lines seen
};

ParseResult parse_flow_log(std::istream& in, FlowFormat format, const ParseOptions& opts = {});
ParseResult parse_flow_log(std::string_view text, FlowFormat format, const ParseOptions& opts = {});

void write_flow_csv(std::ostream& out, const FlowLog& log);
void write_flow_jsonl(std::ostream& out, const FlowLog& log);
std::string serialize(const FlowLog& log, FlowFormat format);

}  // namespace aitrace

#endif  // AITRACE_FLOW_HPP
