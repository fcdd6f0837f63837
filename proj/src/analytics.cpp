#include "aitrace/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace aitrace {

std::string render_percent(std::uint64_t num, std::uint64_t den) {
    if (den == 0) throw std::invalid_argument("percentage of an empty population");
    using u128 = unsigned __int128;
    u128 tenths = (u128(num) * 2000u + den) / (u128(den) * 2u);
    auto t = static_cast<std::uint64_t>(tenths);
    return std::to_string(t / 10) + '.' + std::to_string(t % 10) + '%';
}

std::string render_days_hours(Millis d) {
    auto hours = std::chrono::duration_cast<std::chrono::hours>(d).count();
    if (hours < 0) hours = 0;
    return std::to_string(hours / 24) + "d " + std::to_string(hours % 24) + 'h';
}

std::optional<std::string> AggregateShares::ai_share_text() const {
    if (total_flows == 0) return std::nullopt;
    return render_percent(ai_flows, total_flows);
}

std::optional<std::string> AggregateShares::device_share_text() const {
    if (devices_total == 0) return std::nullopt;
    return render_percent(devices_with_ai, devices_total);
}

AggregateShares aggregate_shares(const FlowLog& flows, const Classifier& tool_of, const ExclusionPolicy& policy) {
    AggregateShares out;
    std::set<Ipv4Address> devices, with_ai;
    for (const auto& f : flows) {
        ++out.total_flows;
        devices.insert(f.device_ip);
        auto tool = tool_of(f.hostname);
        if (tool && !policy.dropped(*tool)) {
            ++out.ai_flows;
            with_ai.insert(f.device_ip);
        }
    }
    out.devices_total = devices.size();
    out.devices_with_ai = with_ai.size();
    if (out.total_flows > 0) out.ai_share = double(out.ai_flows) / double(out.total_flows);
    if (out.devices_total > 0) out.device_share = double(out.devices_with_ai) / double(out.devices_total);
    return out;
}

std::vector<UsageSummary> usage_table(const std::vector<Session>& sessions, const FlowLog& flows,
                                      const Classifier& tool_of, const ExclusionPolicy& policy, std::size_t top_k) {
    std::map<Ipv4Address, UsageSummary> by_device;
    for (const auto& f : flows) {
        auto tool = tool_of(f.hostname);
        if (!tool || policy.dropped(*tool)) continue;
        auto& row = by_device[f.device_ip];
        row.device_ip = f.device_ip;
        ++row.per_tool_flow_counts[*tool];
    }
    for (const auto& s : sessions) {
        if (!policy.counts_toward_total(s.tool)) continue;
        auto it = by_device.find(s.device_ip);
        if (it != by_device.end()) it->second.total_ai_time += s.duration();
    }

    std::vector<UsageSummary> rows;
    rows.reserve(by_device.size());
    for (auto& [ip, row] : by_device) {
        row.breadth = row.per_tool_flow_counts.size();
        row.total_ai_count = apply_policy(row.per_tool_flow_counts, policy).total;
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(), [](const UsageSummary& a, const UsageSummary& b) {
        if (a.breadth != b.breadth) return a.breadth > b.breadth;
        if (a.total_ai_count != b.total_ai_count) return a.total_ai_count > b.total_ai_count;
        return a.device_ip < b.device_ip;
    });
    if (top_k > 0 && rows.size() > top_k) rows.resize(top_k);
    return rows;
}

void write_usage_csv(std::ostream& out, const std::vector<UsageSummary>& rows, const std::vector<Tool>& columns) {
    out << "rank,device_ip";
    for (const auto& t : columns) out << ',' << t.display_name();
    out << ",breadth,total_ai_count,total_ai_time_s,total_ai_time\n";
    std::size_t rank = 0;
    for (const auto& r : rows) {
        out << ++rank << ',' << r.device_ip.to_string();
        for (const auto& t : columns) {
            auto it = r.per_tool_flow_counts.find(t);
            out << ',' << (it == r.per_tool_flow_counts.end() ? 0 : it->second);
        }
        out << ',' << r.breadth << ',' << r.total_ai_count << ','
            << std::chrono::duration_cast<std::chrono::seconds>(r.total_ai_time).count() << ','
            << r.total_ai_time_text() << '\n';
    }
}

std::vector<TotalsDiscrepancy> check_reported_totals(const std::vector<ReportedUsageRow>& rows,
                                                     const ExclusionPolicy& policy) {
    std::vector<TotalsDiscrepancy> out;
    for (const auto& r : rows) {
        auto computed = apply_policy(r.counts, policy).total;
        if (computed != r.reported_total)
            out.push_back({r.device, computed, r.reported_total,
                           static_cast<std::int64_t>(r.reported_total) - static_cast<std::int64_t>(computed)});
    }
    return out;
}

std::vector<ReportedUsageRow> load_reported_usage(std::istream& in) {
    std::vector<ReportedUsageRow> rows;
    std::string line;
    std::vector<Tool> columns;
    bool header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (!header) {
            if (f.size() < 3 || f.front() != "device" || f.back() != "total")
                throw std::runtime_error("usage table header must be device,<tools...>,total");
            for (std::size_t i = 1; i + 1 < f.size(); ++i) columns.push_back(Tool::parse(f[i]));
            header = true;
            continue;
        }
        if (f.size() != columns.size() + 2)
            throw std::runtime_error("usage table line " + std::to_string(line_no) + ": wrong field count");
        ReportedUsageRow r;
        r.device = f.front();
        try {
            for (std::size_t i = 0; i < columns.size(); ++i) r.counts[columns[i]] = std::stoull(f[i + 1]);
            r.reported_total = std::stoull(f.back());
        } catch (const std::exception&) {
            throw std::runtime_error("usage table line " + std::to_string(line_no) + ": non-numeric count");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

Eigen::MatrixXd rowwise_zscore(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(m.rows(), m.cols());
    if (m.cols() == 0) return z;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        if (row.maxCoeff() == row.minCoeff()) continue;
        const double mean = row.mean();
        Eigen::RowVectorXd centered = row.array() - mean;
        const double sigma = std::sqrt(centered.squaredNorm() / static_cast<double>(m.cols()));
        z.row(r) = centered / sigma;
        // One refinement pass removes the residual rounding in the mean.
        z.row(r).array() -= z.row(r).mean();
    }
    return z;
}

HeatmapFrame heatmap(const FlowLog& flows, const Classifier& tool_of, const ExclusionPolicy& policy, Millis bin,
                     TzOffset tz) {
    if (bin.count() <= 0) throw std::invalid_argument("heatmap bin width must be positive");
    check_tz_offset(tz);
    HeatmapFrame frame;
    frame.bin_width = bin;

    struct Hit {
        Ipv4Address device;
        std::int64_t bin;
        std::int64_t bytes;
    };
    std::vector<Hit> hits;
    std::set<Ipv4Address> devices;
    for (const auto& f : flows) {
        auto tool = tool_of(f.hostname);
        if (!tool || policy.dropped(*tool)) continue;
        std::int64_t local_ms = (f.timestamp + tz.as_duration()).time_since_epoch().count();
        hits.push_back({f.device_ip, floor_div(local_ms, bin.count()), f.total_bytes()});
        devices.insert(f.device_ip);
    }
    if (hits.empty()) return frame;

    auto [lo, hi] = std::minmax_element(hits.begin(), hits.end(),
                                        [](const Hit& a, const Hit& b) { return a.bin < b.bin; });
    const std::int64_t first = lo->bin;
    const std::int64_t nbins = hi->bin - first + 1;
    frame.first_bin = Instant(Millis(first * bin.count())) - tz.as_duration();
    frame.devices.assign(devices.begin(), devices.end());

    std::map<Ipv4Address, Eigen::Index> row;
    for (std::size_t i = 0; i < frame.devices.size(); ++i) row[frame.devices[i]] = static_cast<Eigen::Index>(i);
    frame.volume = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(frame.devices.size()), nbins);
    for (const auto& h : hits) frame.volume(row[h.device], h.bin - first) += static_cast<double>(h.bytes);
    frame.z = rowwise_zscore(frame.volume);
    return frame;
}

DailySeries daily_series(const std::vector<Session>& sessions, TzOffset tz) {
    check_tz_offset(tz);
    DailySeries out;
    if (sessions.empty()) return out;

    using std::chrono::days;
    using std::chrono::sys_days;
    std::map<sys_days, std::map<Ipv4Address, std::int64_t>> per_day;
    std::set<Ipv4Address> observed;
    sys_days first = sys_days::max(), last = sys_days::min();

    for (const auto& s : sessions) {
        observed.insert(s.device_ip);
        const sys_days d0 = local_day(s.start, tz);
        const sys_days d1 = local_day(s.end, tz);
        first = std::min(first, d0);
        last = std::max(last, d1);
        if (s.duration().count() == 0) {
            per_day[d0][s.device_ip] += 0;
            continue;
        }
        for (sys_days d = d0; d <= d1; d += days(1)) {
            const Instant lo = std::max(s.start, local_day_start(d, tz));
            const Instant hi = std::min(s.end, local_day_start(d + days(1), tz));
            if (hi > lo) per_day[d][s.device_ip] += (hi - lo).count();
        }
    }

    const auto n = static_cast<Eigen::Index>((last - first).count() + 1);
    out.devices_observed = observed.size();
    out.mean_minutes = Eigen::VectorXd::Zero(n);
    out.active_devices = Eigen::VectorXi::Zero(n);
    out.attributed_ms.assign(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        const sys_days d = first + days(i);
        out.dates.push_back(d);
        auto it = per_day.find(d);
        if (it == per_day.end()) continue;
        std::int64_t total = 0;
        for (const auto& [ip, ms] : it->second) total += ms;
        out.attributed_ms[static_cast<std::size_t>(i)] = total;
        out.active_devices(i) = static_cast<int>(it->second.size());
        out.mean_minutes(i) = static_cast<double>(total) / 60'000.0 / static_cast<double>(it->second.size());
    }
    return out;
}

HourHistogram hour_histogram(const FlowLog& flows, const Classifier& tool_of, TzOffset tz,
                             const ExclusionPolicy& policy) {
    check_tz_offset(tz);
    HourHistogram h;
    h.tz = tz;
    for (const auto& f : flows) {
        auto tool = tool_of(f.hostname);
        if (!tool || policy.dropped(*tool)) continue;
        h.bins(local_hour(f.timestamp, tz)) += static_cast<std::uint64_t>(f.total_bytes());
    }
    return h;
}

HourHistogram device_hourly_trace(const FlowLog& flows, const Classifier& tool_of, Ipv4Address device,
                                  const Tool& tool, TzOffset tz) {
    check_tz_offset(tz);
    HourHistogram h;
    h.tz = tz;
    bool seen = false;
    for (const auto& f : flows) {
        if (f.device_ip != device) continue;
        seen = true;
        auto t = tool_of(f.hostname);
        if (t && *t == tool) h.bins(local_hour(f.timestamp, tz)) += static_cast<std::uint64_t>(f.total_bytes());
    }
    if (!seen) throw UnknownDevice("UnknownDevice: " + device.to_string());
    return h;
}

}  // namespace aitrace
