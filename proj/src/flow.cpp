#include "aitrace/flow.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace aitrace {

std::optional<Ipv4Address> Ipv4Address::parse(std::string_view text) {
    std::uint32_t value = 0;
    std::size_t pos = 0;
    for (int octet = 0; octet < 4; ++octet) {
        if (octet > 0) {
            if (pos >= text.size() || text[pos] != '.') return std::nullopt;
            ++pos;
        }
        std::size_t start = pos;
        unsigned part = 0;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9' && pos - start < 3) {
            part = part * 10 + static_cast<unsigned>(text[pos] - '0');
            ++pos;
        }
        std::size_t len = pos - start;
        if (len == 0 || part > 255 || (len > 1 && text[start] == '0')) return std::nullopt;
        value = (value << 8) | part;
    }
    if (pos != text.size()) return std::nullopt;
    return Ipv4Address(value);
}

std::string Ipv4Address::to_string() const {
    return std::to_string(value_ >> 24) + '.' + std::to_string((value_ >> 16) & 0xff) + '.' +
           std::to_string((value_ >> 8) & 0xff) + '.' + std::to_string(value_ & 0xff);
}

std::string_view to_string(Violation v) {
    switch (v) {
        case Violation::OutsidePrivateStudySubnet: return "OutsidePrivateStudySubnet";
        case Violation::EmptyHostname: return "EmptyHostname";
        case Violation::HostnameWhitespace: return "HostnameWhitespace";
        case Violation::HostnameNotLowercase: return "HostnameNotLowercase";
        case Violation::NegativeVolume: return "NegativeVolume";
    }
    return "Unknown";
}

std::vector<Violation> validate_record(const FlowRecord& r) {
    std::vector<Violation> out;
    if (!r.device_ip.in_study_subnet()) out.push_back(Violation::OutsidePrivateStudySubnet);
    if (r.hostname.empty()) out.push_back(Violation::EmptyHostname);
    bool ws = false, upper = false;
    for (unsigned char c : r.hostname) {
        if (std::isspace(c)) ws = true;
        if (std::isupper(c)) upper = true;
    }
    if (ws) out.push_back(Violation::HostnameWhitespace);
    if (upper) out.push_back(Violation::HostnameNotLowercase);
    if (r.up_bytes < 0 || r.down_bytes < 0) out.push_back(Violation::NegativeVolume);
    return out;
}

std::string normalize_hostname(std::string_view host) {
    while (!host.empty() && host.back() == '.') host.remove_suffix(1);
    std::string out(host);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

FlowLog::FlowLog(std::vector<FlowRecord> records, std::string source_label)
    : records_(std::move(records)), source_label_(std::move(source_label)) {
    std::stable_sort(records_.begin(), records_.end(),
                     [](const FlowRecord& a, const FlowRecord& b) { return a.timestamp < b.timestamp; });
}

FlowLog FlowLog::merge(const std::vector<FlowLog>& logs, std::string source_label) {
    std::vector<FlowRecord> all;
    std::size_t n = 0;
    for (const auto& l : logs) n += l.size();
    all.reserve(n);
    for (const auto& l : logs) all.insert(all.end(), l.begin(), l.end());
    return FlowLog(std::move(all), std::move(source_label));
}

FlowFormat format_for_path(std::string_view path) {
    constexpr std::string_view suffix = ".jsonl";
    if (path.size() >= suffix.size() && path.substr(path.size() - suffix.size()) == suffix)
        return FlowFormat::Jsonl;
    return FlowFormat::Csv;
}

namespace {

std::optional<std::int64_t> parse_int(std::string_view s) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

struct RecordDraft {
    std::string_view timestamp, device_ip, hostname;
    std::int64_t up = 0, down = 0;
};

// Returns an error reason, or empty on success.
std::string build_record(const RecordDraft& d, FlowRecord& out) {
    try {
        out.timestamp = parse_rfc3339(d.timestamp);
    } catch (const TimeParseError& e) {
        return e.what();
    }
    auto ip = Ipv4Address::parse(d.device_ip);
    if (!ip) return "invalid device_ip '" + std::string(d.device_ip) + "'";
    out.device_ip = *ip;
    for (unsigned char c : d.hostname)
        if (std::isspace(c)) return "hostname contains whitespace";
    out.hostname = normalize_hostname(d.hostname);
    out.up_bytes = d.up;
    out.down_bytes = d.down;
    auto violations = validate_record(out);
    if (!violations.empty()) {
        std::string reason;
        for (auto v : violations) {
            if (!reason.empty()) reason += ';';
            reason += to_string(v);
        }
        return reason;
    }
    return {};
}

std::string parse_csv_line(std::string_view line, FlowRecord& out) {
    std::string_view fields[5];
    std::size_t count = 0, start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            if (count == 5) return "expected 5 fields";
            fields[count++] = line.substr(start, i - start);
            start = i + 1;
        }
    }
    if (count != 5) return "expected 5 fields, got " + std::to_string(count);
    RecordDraft d{fields[0], fields[1], fields[2]};
    auto up = parse_int(fields[3]);
    auto down = parse_int(fields[4]);
    if (!up || !down) return "byte volumes must be integers";
    d.up = *up;
    d.down = *down;
    return build_record(d, out);
}

std::string parse_json_line(std::string_view line, FlowRecord& out) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return "not a JSON object";
    for (const char* key : {"timestamp", "device_ip", "hostname"})
        if (!j.contains(key) || !j[key].is_string()) return std::string("missing string field '") + key + "'";
    for (const char* key : {"up_bytes", "down_bytes"})
        if (!j.contains(key) || !j[key].is_number_integer())
            return std::string("missing integer field '") + key + "'";
    const auto& ts = j["timestamp"].get_ref<const std::string&>();
    const auto& ip = j["device_ip"].get_ref<const std::string&>();
    const auto& host = j["hostname"].get_ref<const std::string&>();
    RecordDraft d{ts, ip, host, j["up_bytes"].get<std::int64_t>(), j["down_bytes"].get<std::int64_t>()};
    return build_record(d, out);
}

}  // namespace

ParseResult parse_flow_log(std::istream& in, FlowFormat format, const ParseOptions& opts) {
    ParseResult result;
    std::vector<FlowRecord> records;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = format != FlowFormat::Csv;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != kFlowCsvHeader)
                throw MalformedHeader("expected header '" + std::string(kFlowCsvHeader) + "', got '" + line + "'");
            header_seen = true;
            continue;
        }
        ++result.input_lines;
        FlowRecord rec;
        std::string err = format == FlowFormat::Csv ? parse_csv_line(line, rec) : parse_json_line(line, rec);
        if (err.empty()) {
            records.push_back(std::move(rec));
        } else {
            LineError e{line_no, std::move(err)};
            if (opts.strict) throw LineErrorException(std::move(e));
            result.diagnostics.push_back(std::move(e));
        }
    }
    result.log = FlowLog(std::move(records), opts.source_label);
    return result;
}

ParseResult parse_flow_log(std::string_view text, FlowFormat format, const ParseOptions& opts) {
    std::istringstream in{std::string(text)};
    return parse_flow_log(in, format, opts);
}

void write_flow_csv(std::ostream& out, const FlowLog& log) {
    out << kFlowCsvHeader << '\n';
    for (const auto& r : log) {
        out << format_rfc3339(r.timestamp) << ',' << r.device_ip.to_string() << ',' << r.hostname << ','
            << r.up_bytes << ',' << r.down_bytes << '\n';
    }
}

void write_flow_jsonl(std::ostream& out, const FlowLog& log) {
    for (const auto& r : log) {
        nlohmann::ordered_json j;
        j["timestamp"] = format_rfc3339(r.timestamp);
        j["device_ip"] = r.device_ip.to_string();
        j["hostname"] = r.hostname;
        j["up_bytes"] = r.up_bytes;
        j["down_bytes"] = r.down_bytes;
        out << j.dump() << '\n';
    }
}

std::string serialize(const FlowLog& log, FlowFormat format) {
    std::ostringstream out;
    if (format == FlowFormat::Csv)
        write_flow_csv(out, log);
    else
        write_flow_jsonl(out, log);
    return out.str();
}

}  // namespace aitrace
