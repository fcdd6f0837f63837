#include "aitrace/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <sodium.h>

namespace aitrace {

namespace {

std::string num(double v, const char* fmt = "%.6g") {
    std::array<char, 64> buf{};
    std::snprintf(buf.data(), buf.size(), fmt, v);
    return buf.data();
}

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Svg {
    std::ostringstream body;
    double width, height;

    Svg(double w, double h) : width(w), height(h) {}

    void rect(double x, double y, double w, double h, std::string_view fill) {
        body << "<rect x=\"" << num(x, "%.2f") << "\" y=\"" << num(y, "%.2f") << "\" width=\"" << num(w, "%.2f")
             << "\" height=\"" << num(h, "%.2f") << "\" fill=\"" << fill << "\"/>\n";
    }
    void text(double x, double y, std::string_view s, std::string_view anchor = "start", int size = 11) {
        body << "<text x=\"" << num(x, "%.2f") << "\" y=\"" << num(y, "%.2f") << "\" font-size=\"" << size
             << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << xml_escape(s) << "</text>\n";
    }
    void line(double x1, double y1, double x2, double y2, std::string_view stroke = "#333") {
        body << "<line x1=\"" << num(x1, "%.2f") << "\" y1=\"" << num(y1, "%.2f") << "\" x2=\"" << num(x2, "%.2f")
             << "\" y2=\"" << num(y2, "%.2f") << "\" stroke=\"" << stroke << "\"/>\n";
    }
    void polyline(const std::vector<std::pair<double, double>>& pts, std::string_view stroke) {
        body << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"2\" points=\"";
        for (const auto& [x, y] : pts) body << num(x, "%.2f") << ',' << num(y, "%.2f") << ' ';
        body << "\"/>\n";
    }
    std::string str() const {
        std::ostringstream out;
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width, "%.0f") << "\" height=\""
            << num(height, "%.0f") << "\" viewBox=\"0 0 " << num(width, "%.0f") << ' ' << num(height, "%.0f")
            << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
            << body.str() << "</svg>\n";
        return out.str();
    }
};

// Diverging blue-white-red for z in [-3, 3].
std::string diverging(double z) {
    double t = std::clamp(z / 3.0, -1.0, 1.0);
    int r, g, b;
    if (t < 0) {
        r = static_cast<int>(std::lround(255 * (1 + t)));
        g = r;
        b = 255;
    } else {
        r = 255;
        g = static_cast<int>(std::lround(255 * (1 - t)));
        b = g;
    }
    std::array<char, 8> buf{};
    std::snprintf(buf.data(), buf.size(), "#%02x%02x%02x", r, g, b);
    return buf.data();
}

std::string bar_chart(const std::vector<std::string>& labels, const std::vector<double>& values,
                      std::string_view title, std::string_view y_label) {
    const double left = 70, right = 20, top = 40, bottom = 60;
    const double bar_w = std::max(8.0, std::min(40.0, 800.0 / std::max<std::size_t>(1, values.size())));
    const double plot_w = bar_w * static_cast<double>(values.size());
    const double plot_h = 300;
    Svg svg(left + plot_w + right, top + plot_h + bottom);
    svg.text(left, 22, title, "start", 14);
    double vmax = values.empty() ? 0 : *std::max_element(values.begin(), values.end());
    if (vmax <= 0) vmax = 1;
    svg.line(left, top + plot_h, left + plot_w, top + plot_h);
    svg.line(left, top, left, top + plot_h);
    svg.text(left - 6, top + 4, num(vmax), "end", 10);
    svg.text(left - 6, top + plot_h, "0", "end", 10);
    svg.text(12, top + plot_h / 2, y_label, "start", 10);
    for (std::size_t i = 0; i < values.size(); ++i) {
        double h = plot_h * values[i] / vmax;
        double x = left + bar_w * static_cast<double>(i);
        svg.rect(x + 1, top + plot_h - h, bar_w - 2, h, "#4878a8");
        if (values.size() <= 40 || i % (values.size() / 20 + 1) == 0)
            svg.text(x + bar_w / 2, top + plot_h + 14, labels[i], "middle", 9);
    }
    return svg.str();
}

}  // namespace

void write_heatmap_csv(std::ostream& out, const HeatmapFrame& frame) {
    out << "device_ip";
    for (Eigen::Index k = 0; k < frame.bins(); ++k) out << ',' << format_rfc3339(frame.bin_start(k));
    out << '\n';
    for (std::size_t r = 0; r < frame.devices.size(); ++r) {
        out << frame.devices[r].to_string();
        for (Eigen::Index k = 0; k < frame.bins(); ++k)
            out << ',' << num(frame.z(static_cast<Eigen::Index>(r), k), "%.9f");
        out << '\n';
    }
}

void write_daily_csv(std::ostream& out, const DailySeries& series) {
    out << "date,active_devices,mean_minutes_per_active_device,attributed_ms\n";
    for (std::size_t i = 0; i < series.dates.size(); ++i) {
        auto idx = static_cast<Eigen::Index>(i);
        out << format_date(series.dates[i]) << ',' << series.active_devices(idx) << ','
            << num(series.mean_minutes(idx), "%.3f") << ',' << series.attributed_ms[i] << '\n';
    }
}

void write_hours_csv(std::ostream& out, const HourHistogram& hist) {
    out << "local_hour,bytes\n";
    for (int h = 0; h < 24; ++h) out << h << ',' << hist.bins(h) << '\n';
}

void write_durations_csv(std::ostream& out, const DurationHistogram& hist) {
    out << "tool";
    for (Eigen::Index k = 0; k < hist.counts.cols(); ++k)
        out << ",[" << num(static_cast<double>(k) * hist.bin_width_minutes) << ';'
            << num(static_cast<double>(k + 1) * hist.bin_width_minutes) << ')';
    out << '\n';
    for (std::size_t r = 0; r < hist.tools.size(); ++r) {
        out << hist.tools[r].display_name();
        for (Eigen::Index k = 0; k < hist.counts.cols(); ++k)
            out << ',' << hist.counts(static_cast<Eigen::Index>(r), k);
        out << '\n';
    }
}

std::string heatmap_svg(const HeatmapFrame& frame) {
    const double left = 90, top = 40, cell_h = 12;
    const double cell_w = frame.bins() > 0 ? std::max(1.0, std::min(12.0, 1200.0 / double(frame.bins()))) : 1.0;
    const auto rows = static_cast<double>(frame.devices.size());
    Svg svg(left + cell_w * double(frame.bins()) + 20, top + cell_h * rows + 40);
    svg.text(left, 22, "AI traffic volume, row-wise z-scores (hourly bins)", "start", 14);
    for (std::size_t r = 0; r < frame.devices.size(); ++r) {
        double y = top + cell_h * double(r);
        svg.text(left - 6, y + cell_h - 2, frame.devices[r].to_string(), "end", 9);
        for (Eigen::Index k = 0; k < frame.bins(); ++k)
            svg.rect(left + cell_w * double(k), y, cell_w, cell_h, diverging(frame.z(Eigen::Index(r), k)));
    }
    if (frame.bins() > 0) {
        svg.text(left, top + cell_h * rows + 16, format_rfc3339(frame.bin_start(0)), "start", 9);
        svg.text(left + cell_w * double(frame.bins()), top + cell_h * rows + 16,
                 format_rfc3339(frame.bin_start(frame.bins() - 1)), "end", 9);
    }
    return svg.str();
}

std::string daily_svg(const DailySeries& series) {
    const double left = 70, top = 40, plot_w = 700, plot_h = 300;
    Svg svg(left + plot_w + 30, top + plot_h + 60);
    svg.text(left, 22, "Mean daily AI usage per active device (minutes)", "start", 14);
    svg.line(left, top + plot_h, left + plot_w, top + plot_h);
    svg.line(left, top, left, top + plot_h);
    const auto n = series.dates.size();
    double vmax = n ? series.mean_minutes.maxCoeff() : 0;
    if (vmax <= 0) vmax = 1;
    svg.text(left - 6, top + 4, num(vmax, "%.1f"), "end", 10);
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < n; ++i) {
        double x = left + (n > 1 ? plot_w * double(i) / double(n - 1) : plot_w / 2);
        double y = top + plot_h - plot_h * series.mean_minutes(Eigen::Index(i)) / vmax;
        pts.emplace_back(x, y);
        if (n <= 31 || i % (n / 15 + 1) == 0)
            svg.text(x, top + plot_h + 14, format_date(series.dates[i]).substr(5), "middle", 9);
    }
    svg.polyline(pts, "#c04040");
    return svg.str();
}

std::string hours_svg(const HourHistogram& hist, std::string_view title) {
    std::vector<std::string> labels;
    std::vector<double> values;
    for (int h = 0; h < 24; ++h) {
        labels.push_back(std::to_string(h));
        values.push_back(static_cast<double>(hist.bins(h)) / 1e6);
    }
    std::string t(title);
    t += " (UTC" + std::string(hist.tz.minutes < 0 ? "-" : "+") + num(std::abs(hist.tz.minutes) / 60.0, "%g") + ")";
    return bar_chart(labels, values, t, "MB");
}

std::string durations_svg(const DurationHistogram& hist) {
    std::vector<std::string> labels;
    std::vector<double> values;
    for (Eigen::Index k = 0; k < hist.counts.cols(); ++k) {
        labels.push_back(num(static_cast<double>(k) * hist.bin_width_minutes));
        values.push_back(static_cast<double>(hist.counts.col(k).sum()));
    }
    return bar_chart(labels, values, "Session durations (minutes, all tools)", "sessions");
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
    crypto_hash_sha256_state st;
    crypto_hash_sha256_init(&st);
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        auto got = in.gcount();
        if (got > 0)
            crypto_hash_sha256_update(&st, reinterpret_cast<const unsigned char*>(buf.data()),
                                      static_cast<unsigned long long>(got));
    }
    std::array<unsigned char, crypto_hash_sha256_BYTES> digest{};
    crypto_hash_sha256_final(&st, digest.data());
    std::array<char, crypto_hash_sha256_BYTES * 2 + 1> hex{};
    sodium_bin2hex(hex.data(), hex.size(), digest.data(), digest.size());
    return hex.data();
}

}  // namespace aitrace
