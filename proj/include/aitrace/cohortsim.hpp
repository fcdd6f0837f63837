#ifndef AITRACE_COHORTSIM_HPP
#define AITRACE_COHORTSIM_HPP

#include <array>
#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "aitrace/catalog.hpp"
#include "aitrace/flow.hpp"

namespace aitrace {

class InvalidConfig : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BurstWindow {
    std::chrono::sys_days first;  // local dates, inclusive
    std::chrono::sys_days last;
    double multiplier = 1.0;
};

struct LogNormal {
    double mu = 0;  // log-space location
    double sigma = 1;
};

/// Synthetic cohort description. Hourly AI arrival rate for a device is
/// ai_rate_per_hour × (diurnal[h] / mean diurnal) × device intensity × burst.
struct CohortConfig {
    std::uint64_t seed = 1;
    std::size_t n_devices = 20;
    Instant start = parse_rfc3339("2025-04-24T00:00:00Z");
    Instant end = parse_rfc3339("2025-05-15T00:00:00Z");
    TzOffset tz{-240};
    Ipv4Address first_device = *Ipv4Address::parse("10.7.0.100");

    double onboarding_stagger_days = 0;  // uniform onboarding delay in [0, stagger]
    double dropout_per_day = 0;          // daily probability a device stops for good
    double intensity_sigma = 0.5;        // log-normal device heterogeneity (mean 1)

    double ai_rate_per_hour = 4;
    double background_rate_per_hour = 20;
    std::map<Tool, double> tool_weights{{ToolKind::ChatGPT, 5}, {ToolKind::Copilot, 2},
                                        {ToolKind::Claude, 1},  {ToolKind::DeepSeek, 0.5},
                                        {ToolKind::Perplexity, 0.3}};
    double tool_concentration = 2.0;     // gamma shape for per-device preference noise; 0 disables

    std::array<double, 24> diurnal;      // per local hour weights
    std::vector<BurstWindow> bursts;

    LogNormal up_bytes{6.2, 1.0};        // median ≈ 490 B
    LogNormal down_bytes{7.8, 1.0};      // median ≈ 2.4 KB

    CohortConfig();

    /// Throws InvalidConfig.
    void check() const;
};

/// Flat `key = value` file; `#` starts a comment. Unknown keys are rejected.
CohortConfig parse_cohort_config(std::istream& in);
CohortConfig load_cohort_config(const std::string& path);

/// Hostnames the simulator uses for a tool; all classify under the default catalog
/// (google.com only with the Gemini-via-search rule).
const std::vector<std::string>& simulated_hostnames(const Tool& tool);
const std::vector<std::string>& background_hostnames();

/// Deterministic for a fixed seed. Devices are generated independently and
/// merged by timestamp, ties ordered by device address.
FlowLog generate(const CohortConfig& config);

}  // namespace aitrace

#endif  // AITRACE_COHORTSIM_HPP
