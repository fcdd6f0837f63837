#ifndef AITRACE_ANALYTICS_HPP
#define AITRACE_ANALYTICS_HPP

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "aitrace/catalog.hpp"
#include "aitrace/flow.hpp"
#include "aitrace/sessionizer.hpp"

namespace aitrace {

/// Renders num/den as a percentage rounded half-up to one decimal, e.g. "4.9%".
/// Exact integer arithmetic; den must be positive.
std::string render_percent(std::uint64_t num, std::uint64_t den);

/// Renders a duration as whole days and hours, truncated: "1d 18h".
std::string render_days_hours(Millis d);

struct AggregateShares {
    std::uint64_t total_flows = 0;
    std::uint64_t ai_flows = 0;
    std::uint64_t devices_total = 0;
    std::uint64_t devices_with_ai = 0;
    std::optional<double> ai_share;      // absent for an empty log
    std::optional<double> device_share;  // absent when no devices

    std::optional<std::string> ai_share_text() const;
    std::optional<std::string> device_share_text() const;
};

/// AI flows are classified flows whose tool is not dropped entirely.
AggregateShares aggregate_shares(const FlowLog& flows, const Classifier& tool_of,
                                 const ExclusionPolicy& policy = {});

struct UsageSummary {
    Ipv4Address device_ip;
    ToolCounts per_tool_flow_counts;  // dropped tools omitted
    std::size_t breadth = 0;          // tools with at least one flow
    std::uint64_t total_ai_count = 0; // policy-adjusted
    Millis total_ai_time{0};          // policy-included session durations

    std::string total_ai_time_text() const { return render_days_hours(total_ai_time); }
};

/// Ranked by breadth, then total_ai_count (both descending), then device_ip
/// ascending. `top_k` = 0 keeps every device.
std::vector<UsageSummary> usage_table(const std::vector<Session>& sessions, const FlowLog& flows,
                                      const Classifier& tool_of, const ExclusionPolicy& policy,
                                      std::size_t top_k = 0);

void write_usage_csv(std::ostream& out, const std::vector<UsageSummary>& rows, const std::vector<Tool>& columns);

/// A published per-device row: per-tool counts plus the printed total.
struct ReportedUsageRow {
    std::string device;
    ToolCounts counts;
    std::uint64_t reported_total = 0;
};

struct TotalsDiscrepancy {
    std::string device;
    std::uint64_t computed_total = 0;
    std::uint64_t reported_total = 0;
    std::int64_t residual = 0;  // reported - computed
};

/// Validation mode: rows whose printed total differs from the policy total.
std::vector<TotalsDiscrepancy> check_reported_totals(const std::vector<ReportedUsageRow>& rows,
                                                     const ExclusionPolicy& policy);

/// `device,<tool>...,total` CSV with a header naming the tool columns.
std::vector<ReportedUsageRow> load_reported_usage(std::istream& in);

struct HeatmapFrame {
    std::vector<Ipv4Address> devices;
    Instant first_bin{};
    Millis bin_width{std::chrono::hours(1)};
    Eigen::MatrixXd volume;  // device × bin, AI bytes
    Eigen::MatrixXd z;       // row-wise z-scores (population σ); constant rows are zero

    Eigen::Index bins() const { return volume.cols(); }
    Instant bin_start(Eigen::Index k) const { return first_bin + bin_width * k; }
};

/// Row-wise z-scores with population standard deviation. Constant rows map to zeros.
Eigen::MatrixXd rowwise_zscore(const Eigen::MatrixXd& m);

/// Devices with AI traffic × contiguous bins spanning the first to the last AI flow.
/// Bins are aligned to local hours under `tz`.
HeatmapFrame heatmap(const FlowLog& flows, const Classifier& tool_of, const ExclusionPolicy& policy = {},
                     Millis bin = std::chrono::hours(1), TzOffset tz = {});

struct DailySeries {
    std::vector<std::chrono::sys_days> dates;  // local dates, contiguous
    Eigen::VectorXd mean_minutes;              // per active device; 0 when none active
    Eigen::VectorXi active_devices;
    std::vector<std::int64_t> attributed_ms;   // session time attributed to each date
    std::size_t devices_observed = 0;
};

/// Session time is split at local midnights; a device is active on a date if
/// one of its sessions overlaps it (a zero-length session overlaps the date it
/// falls on).
DailySeries daily_series(const std::vector<Session>& sessions, TzOffset tz);

using HourBins = Eigen::Matrix<std::uint64_t, 24, 1>;

struct HourHistogram {
    TzOffset tz;
    HourBins bins = HourBins::Zero();  // up+down bytes per local hour
};

/// Throws std::invalid_argument for offsets outside ±14h.
HourHistogram hour_histogram(const FlowLog& flows, const Classifier& tool_of, TzOffset tz,
                             const ExclusionPolicy& policy = {});

class UnknownDevice : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Local-hour byte totals for one device's traffic to one tool.
HourHistogram device_hourly_trace(const FlowLog& flows, const Classifier& tool_of, Ipv4Address device,
                                  const Tool& tool, TzOffset tz);

}  // namespace aitrace

#endif  // AITRACE_ANALYTICS_HPP
