#ifndef AITRACE_SESSIONIZER_HPP
#define AITRACE_SESSIONIZER_HPP

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "aitrace/catalog.hpp"
#include "aitrace/flow.hpp"

namespace aitrace {

/// Minimum quiet interval that splits two sessions.
class GapThreshold {
public:
    /// Throws std::invalid_argument unless the gap is positive.
    explicit GapThreshold(Millis gap);
    static GapThreshold minutes(double m);

    static GapThreshold preset3() { return minutes(3); }
    static GapThreshold preset5() { return minutes(5); }
    static GapThreshold preset10() { return minutes(10); }

    Millis value() const { return gap_; }

private:
    Millis gap_;
};

struct Session {
    Ipv4Address device_ip;
    Tool tool;
    Instant start{};
    Instant end{};
    std::uint64_t flow_count = 0;
    std::int64_t up_bytes = 0;
    std::int64_t down_bytes = 0;

    Millis duration() const { return end - start; }

    friend bool operator==(const Session&, const Session&) = default;
};

class UnsortedInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Splits each (device, tool) stream wherever two consecutive flows are at
/// least `gap` apart. Unclassified flows are dropped. Output is ordered by
/// device, tool, start.
std::vector<Session> sessionize(std::span<const FlowRecord> flows, const Classifier& tool_of, GapThreshold gap);
std::vector<Session> sessionize(const FlowLog& flows, const Classifier& tool_of, GapThreshold gap);

/// Sessions whose tool contributes to policy totals.
std::vector<Session> included_sessions(const std::vector<Session>& sessions, const ExclusionPolicy& policy);

using CountMatrix = Eigen::Matrix<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Row per tool, column per [k·w, (k+1)·w) minute bin; all rows span up to
/// the longest session.
struct DurationHistogram {
    double bin_width_minutes = 0;
    std::vector<Tool> tools;
    CountMatrix counts;
};

DurationHistogram session_duration_histogram(const std::vector<Session>& sessions, double bin_width_minutes);

void write_sessions_csv(std::ostream& out, const std::vector<Session>& sessions);

}  // namespace aitrace

#endif  // AITRACE_SESSIONIZER_HPP
