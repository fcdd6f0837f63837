#include "aitrace/sessionizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <tuple>

namespace aitrace {

GapThreshold::GapThreshold(Millis gap) : gap_(gap) {
    if (gap.count() <= 0) throw std::invalid_argument("inactivity gap must be positive");
}

GapThreshold GapThreshold::minutes(double m) {
    if (!(m > 0) || !std::isfinite(m)) throw std::invalid_argument("inactivity gap must be positive");
    return GapThreshold(Millis(static_cast<std::int64_t>(std::llround(m * 60'000.0))));
}

std::vector<Session> sessionize(std::span<const FlowRecord> flows, const Classifier& tool_of, GapThreshold gap) {
    using Key = std::pair<Ipv4Address, Tool>;
    std::map<Key, std::vector<Session>> streams;
    const Millis g = gap.value();

    for (std::size_t i = 0; i < flows.size(); ++i) {
        const auto& f = flows[i];
        if (i > 0 && f.timestamp < flows[i - 1].timestamp)
            throw UnsortedInput("flow " + std::to_string(i) + " precedes its predecessor");
        auto tool = tool_of(f.hostname);
        if (!tool) continue;
        auto& stream = streams[{f.device_ip, *tool}];
        if (stream.empty() || f.timestamp - stream.back().end >= g) {
            stream.push_back(Session{f.device_ip, *tool, f.timestamp, f.timestamp, 0, 0, 0});
        }
        auto& s = stream.back();
        s.end = f.timestamp;
        ++s.flow_count;
        s.up_bytes += f.up_bytes;
        s.down_bytes += f.down_bytes;
    }

    std::vector<Session> out;
    for (auto& [key, stream] : streams) out.insert(out.end(), stream.begin(), stream.end());
    return out;
}

std::vector<Session> sessionize(const FlowLog& flows, const Classifier& tool_of, GapThreshold gap) {
    return sessionize(std::span<const FlowRecord>(flows.records()), tool_of, gap);
}

std::vector<Session> included_sessions(const std::vector<Session>& sessions, const ExclusionPolicy& policy) {
    std::vector<Session> out;
    std::copy_if(sessions.begin(), sessions.end(), std::back_inserter(out),
                 [&](const Session& s) { return policy.counts_toward_total(s.tool); });
    return out;
}

DurationHistogram session_duration_histogram(const std::vector<Session>& sessions, double bin_width_minutes) {
    if (!(bin_width_minutes > 0)) throw std::invalid_argument("bin width must be positive");
    DurationHistogram h;
    h.bin_width_minutes = bin_width_minutes;
    if (sessions.empty()) return h;

    const double width_ms = bin_width_minutes * 60'000.0;
    auto bin_of = [&](const Session& s) {
        return static_cast<Eigen::Index>(std::floor(static_cast<double>(s.duration().count()) / width_ms));
    };

    std::map<Tool, Eigen::Index> row;
    Eigen::Index max_bin = 0;
    for (const auto& s : sessions) {
        row.emplace(s.tool, 0);
        max_bin = std::max(max_bin, bin_of(s));
    }
    for (auto& [tool, idx] : row) {
        idx = static_cast<Eigen::Index>(h.tools.size());
        h.tools.push_back(tool);
    }
    h.counts = CountMatrix::Zero(static_cast<Eigen::Index>(h.tools.size()), max_bin + 1);
    for (const auto& s : sessions) ++h.counts(row[s.tool], bin_of(s));
    return h;
}

void write_sessions_csv(std::ostream& out, const std::vector<Session>& sessions) {
    out << "device_ip,tool,start,end,duration_s,flow_count,up_bytes,down_bytes\n";
    for (const auto& s : sessions) {
        auto ms = s.duration().count();
        out << s.device_ip.to_string() << ',' << s.tool.display_name() << ',' << format_rfc3339(s.start) << ','
            << format_rfc3339(s.end) << ',' << ms / 1000 << '.' << static_cast<char>('0' + (ms % 1000) / 100)
            << static_cast<char>('0' + (ms % 100) / 10) << static_cast<char>('0' + ms % 10) << ','
            << s.flow_count << ',' << s.up_bytes << ',' << s.down_bytes << '\n';
    }
}

}  // namespace aitrace
