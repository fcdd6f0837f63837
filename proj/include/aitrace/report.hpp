#ifndef AITRACE_REPORT_HPP
#define AITRACE_REPORT_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "aitrace/analytics.hpp"
#include "aitrace/sessionizer.hpp"

namespace aitrace {

// CSV is the contract; SVG output is presentation only and embeds no timestamps
// of its own, so identical inputs render identical files.

void write_heatmap_csv(std::ostream& out, const HeatmapFrame& frame);
void write_daily_csv(std::ostream& out, const DailySeries& series);
void write_hours_csv(std::ostream& out, const HourHistogram& hist);
void write_durations_csv(std::ostream& out, const DurationHistogram& hist);

std::string heatmap_svg(const HeatmapFrame& frame);
std::string daily_svg(const DailySeries& series);
std::string hours_svg(const HourHistogram& hist, std::string_view title);
std::string durations_svg(const DurationHistogram& hist);

/// Writes via a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Lowercase hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace aitrace

#endif  // AITRACE_REPORT_HPP
