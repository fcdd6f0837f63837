#include "aitrace/cohortsim.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <random>
#include <sstream>

namespace aitrace {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            auto part = trim(s.substr(start, i - start));
            if (!part.empty()) out.push_back(part);
            start = i + 1;
        }
    }
    return out;
}

double to_double(std::string_view key, std::string_view v) {
    try {
        std::size_t used = 0;
        double d = std::stod(std::string(v), &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw InvalidConfig("config key '" + std::string(key) + "': expected a number, got '" + std::string(v) + "'");
    }
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
    try {
        std::size_t used = 0;
        auto n = std::stoull(std::string(v), &used, 0);
        if (used != v.size() || v.front() == '-') throw std::invalid_argument("bad");
        return n;
    } catch (const std::exception&) {
        throw InvalidConfig("config key '" + std::string(key) + "': expected an unsigned integer");
    }
}

BurstWindow parse_burst(std::string_view v) {
    // 2025-05-10..2025-05-14:7
    auto colon = v.rfind(':');
    auto dots = v.find("..");
    if (colon == std::string_view::npos || dots == std::string_view::npos || dots > colon)
        throw InvalidConfig("burst must look like YYYY-MM-DD..YYYY-MM-DD:multiplier");
    try {
        BurstWindow b;
        b.first = parse_date(trim(v.substr(0, dots)));
        b.last = parse_date(trim(v.substr(dots + 2, colon - dots - 2)));
        b.multiplier = to_double("burst", trim(v.substr(colon + 1)));
        return b;
    } catch (const TimeParseError& e) {
        throw InvalidConfig(std::string("burst: ") + e.what());
    }
}

}  // namespace

CohortConfig::CohortConfig() {
    diurnal.fill(1.0);
}

void CohortConfig::check() const {
    if (!(end > start)) throw InvalidConfig("study window is empty");
    try {
        check_tz_offset(tz);
    } catch (const std::invalid_argument& e) {
        throw InvalidConfig(e.what());
    }
    if (n_devices > 0 && std::uint64_t(first_device.value()) + n_devices - 1 > 0x0AFFFFFFu)
        throw InvalidConfig("device range leaves 10.0.0.0/8");
    if (!first_device.in_study_subnet()) throw InvalidConfig("first_device must lie in 10.0.0.0/8");
    for (double w : diurnal)
        if (!(w >= 0) || !std::isfinite(w)) throw InvalidConfig("diurnal weights must be non-negative");
    if (std::accumulate(diurnal.begin(), diurnal.end(), 0.0) <= 0)
        throw InvalidConfig("at least one diurnal weight must be positive");
    double tool_sum = 0;
    for (const auto& [tool, w] : tool_weights) {
        if (!(w >= 0) || !std::isfinite(w)) throw InvalidConfig("tool weights must be non-negative");
        if (simulated_hostnames(tool).empty())
            throw InvalidConfig("no simulated hostnames for tool '" + tool.display_name() + "'");
        tool_sum += w;
    }
    if (ai_rate_per_hour > 0 && tool_sum <= 0) throw InvalidConfig("at least one tool weight must be positive");
    for (const auto& b : bursts) {
        if (!(b.multiplier >= 1)) throw InvalidConfig("burst multiplier must be >= 1");
        if (b.last < b.first) throw InvalidConfig("burst window is reversed");
    }
    auto non_negative = [](double x) { return x >= 0 && std::isfinite(x); };
    if (!non_negative(ai_rate_per_hour) || !non_negative(background_rate_per_hour))
        throw InvalidConfig("rates must be non-negative");
    if (!non_negative(onboarding_stagger_days) || !non_negative(intensity_sigma) ||
        !non_negative(tool_concentration))
        throw InvalidConfig("stagger, intensity_sigma and tool_concentration must be non-negative");
    if (!(dropout_per_day >= 0 && dropout_per_day <= 1)) throw InvalidConfig("dropout_per_day must be in [0, 1]");
    if (!(up_bytes.sigma >= 0) || !(down_bytes.sigma >= 0)) throw InvalidConfig("byte sigma must be non-negative");
}

CohortConfig parse_cohort_config(std::istream& in) {
    CohortConfig c;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        std::string_view s = trim(std::string_view(line).substr(0, hash));
        if (s.empty()) continue;
        auto eq = s.find('=');
        if (eq == std::string_view::npos)
            throw InvalidConfig("config line " + std::to_string(line_no) + ": expected key = value");
        auto key = trim(s.substr(0, eq));
        auto value = trim(s.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);

        try {
            if (key == "seed") c.seed = to_u64(key, value);
            else if (key == "n_devices") c.n_devices = to_u64(key, value);
            else if (key == "start") c.start = parse_rfc3339(value);
            else if (key == "end") c.end = parse_rfc3339(value);
            else if (key == "tz_offset_minutes") c.tz.minutes = static_cast<std::int32_t>(to_double(key, value));
            else if (key == "first_device") {
                auto ip = Ipv4Address::parse(value);
                if (!ip) throw InvalidConfig("first_device is not an IPv4 address");
                c.first_device = *ip;
            }
            else if (key == "onboarding_stagger_days") c.onboarding_stagger_days = to_double(key, value);
            else if (key == "dropout_per_day") c.dropout_per_day = to_double(key, value);
            else if (key == "intensity_sigma") c.intensity_sigma = to_double(key, value);
            else if (key == "ai_rate_per_hour") c.ai_rate_per_hour = to_double(key, value);
            else if (key == "background_rate_per_hour") c.background_rate_per_hour = to_double(key, value);
            else if (key == "tool_concentration") c.tool_concentration = to_double(key, value);
            else if (key == "tool_weights") {
                c.tool_weights.clear();
                for (auto item : split(value, ',')) {
                    auto colon = item.find(':');
                    if (colon == std::string_view::npos) throw InvalidConfig("tool_weights entries are tool:weight");
                    c.tool_weights[Tool::parse(trim(item.substr(0, colon)))] =
                        to_double(key, trim(item.substr(colon + 1)));
                }
            }
            else if (key == "diurnal") {
                auto parts = split(value, ',');
                if (parts.size() != 24) throw InvalidConfig("diurnal needs exactly 24 weights");
                for (std::size_t h = 0; h < 24; ++h) c.diurnal[h] = to_double(key, parts[h]);
            }
            else if (key == "burst") {
                for (auto item : split(value, ';')) c.bursts.push_back(parse_burst(item));
            }
            else if (key == "up_bytes_mu") c.up_bytes.mu = to_double(key, value);
            else if (key == "up_bytes_sigma") c.up_bytes.sigma = to_double(key, value);
            else if (key == "down_bytes_mu") c.down_bytes.mu = to_double(key, value);
            else if (key == "down_bytes_sigma") c.down_bytes.sigma = to_double(key, value);
            else throw InvalidConfig("unknown config key '" + std::string(key) + "'");
        } catch (const TimeParseError& e) {
            throw InvalidConfig("config key '" + std::string(key) + "': " + e.what());
        }
    }
    c.check();
    return c;
}

CohortConfig load_cohort_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidConfig("cannot open config file " + path);
    return parse_cohort_config(in);
}

const std::vector<std::string>& simulated_hostnames(const Tool& tool) {
    static const std::map<ToolKind, std::vector<std::string>> hosts{
        {ToolKind::ChatGPT, {"chatgpt.com", "ws.chatgpt.com", "cdn.oaistatic.com", "api.openai.com"}},
        {ToolKind::Claude, {"claude.ai", "api.anthropic.com"}},
        {ToolKind::Copilot, {"copilot.microsoft.com", "api.githubcopilot.com"}},
        {ToolKind::DeepSeek, {"chat.deepseek.com", "deepseek.com"}},
        {ToolKind::Gemini, {"gemini.google.com", "google.com", "www.google.com"}},
        {ToolKind::Grok, {"grok.com"}},
        {ToolKind::Perplexity, {"perplexity.ai", "suggest.perplexity.ai", "www.perplexity.ai"}},
    };
    static const std::vector<std::string> none;
    auto it = hosts.find(tool.kind());
    return it == hosts.end() ? none : it->second;
}

const std::vector<std::string>& background_hostnames() {
    static const std::vector<std::string> hosts{
        "www.wikipedia.org", "canvas.instructure.com", "www.youtube.com", "i.instagram.com",
        "mail.google.com",   "github.com",             "stackoverflow.com", "api.spotify.com",
        "www.reddit.com",    "outlook.office365.com",
    };
    return hosts;
}

namespace {

double burst_multiplier(const CohortConfig& c, std::chrono::sys_days local) {
    double m = 1.0;
    for (const auto& b : c.bursts)
        if (local >= b.first && local <= b.last) m *= b.multiplier;
    return m;
}

std::vector<FlowRecord> generate_device(const CohortConfig& c, std::size_t index, double mean_diurnal) {
    std::seed_seq seq{static_cast<std::uint32_t>(c.seed), static_cast<std::uint32_t>(c.seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const Ipv4Address ip(c.first_device.value() + static_cast<std::uint32_t>(index));
    const double s = c.intensity_sigma;
    const double intensity = s > 0 ? std::lognormal_distribution<double>(-0.5 * s * s, s)(rng) : 1.0;

    std::vector<Tool> tools;
    std::vector<double> weights;
    for (const auto& [tool, w] : c.tool_weights) {
        double noise = c.tool_concentration > 0
                           ? std::gamma_distribution<double>(c.tool_concentration, 1.0 / c.tool_concentration)(rng)
                           : 1.0;
        tools.push_back(tool);
        weights.push_back(w * noise);
    }
    if (std::accumulate(weights.begin(), weights.end(), 0.0) <= 0) {
        weights.clear();
        for (const auto& [tool, w] : c.tool_weights) weights.push_back(w);
    }
    std::discrete_distribution<std::size_t> pick_tool(weights.begin(), weights.end());
    std::lognormal_distribution<double> up(c.up_bytes.mu, c.up_bytes.sigma);
    std::lognormal_distribution<double> down(c.down_bytes.mu, c.down_bytes.sigma);

    const auto hour = std::chrono::hours(1);
    const auto stagger = Millis(static_cast<std::int64_t>(c.onboarding_stagger_days * 86'400'000.0 * unit(rng)));
    Instant t = std::chrono::floor<std::chrono::hours>(c.start + stagger);
    if (t < c.start) t += hour;

    std::vector<FlowRecord> out;
    auto current_day = local_day(t, c.tz);
    const auto& bg_hosts = background_hostnames();
    std::uniform_int_distribution<std::size_t> pick_bg(0, bg_hosts.size() - 1);

    auto emit = [&](Instant hour_start, const std::string& host) {
        Instant end = std::min(hour_start + hour, c.end);
        auto span = (end - hour_start).count();
        auto offset = static_cast<std::int64_t>(unit(rng) * static_cast<double>(span));
        out.push_back(FlowRecord{hour_start + Millis(offset), ip, host,
                                 static_cast<std::int64_t>(std::llround(up(rng))),
                                 static_cast<std::int64_t>(std::llround(down(rng)))});
    };

    for (; t < c.end; t += hour) {
        auto day = local_day(t, c.tz);
        if (day != current_day) {
            current_day = day;
            if (c.dropout_per_day > 0 && unit(rng) < c.dropout_per_day) break;
        }
        const double diurnal = c.diurnal[static_cast<std::size_t>(local_hour(t, c.tz))] / mean_diurnal;
        const double ai_rate = c.ai_rate_per_hour * diurnal * intensity * burst_multiplier(c, day);
        const double bg_rate = c.background_rate_per_hour * diurnal * intensity;

        if (ai_rate > 0) {
            auto n = std::poisson_distribution<std::int64_t>(ai_rate)(rng);
            for (std::int64_t i = 0; i < n; ++i) {
                const auto& hosts = simulated_hostnames(tools[pick_tool(rng)]);
                emit(t, hosts[std::uniform_int_distribution<std::size_t>(0, hosts.size() - 1)(rng)]);
            }
        }
        if (bg_rate > 0) {
            auto n = std::poisson_distribution<std::int64_t>(bg_rate)(rng);
            for (std::int64_t i = 0; i < n; ++i) emit(t, bg_hosts[pick_bg(rng)]);
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const FlowRecord& a, const FlowRecord& b) { return a.timestamp < b.timestamp; });
    return out;
}

}  // namespace

FlowLog generate(const CohortConfig& config) {
    config.check();
    const double mean_diurnal = std::accumulate(config.diurnal.begin(), config.diurnal.end(), 0.0) / 24.0;
    std::vector<FlowRecord> all;
    for (std::size_t d = 0; d < config.n_devices; ++d) {
        auto flows = generate_device(config, d, mean_diurnal);
        all.insert(all.end(), std::make_move_iterator(flows.begin()), std::make_move_iterator(flows.end()));
    }
    // Devices were appended in address order, so the stable sort breaks ties by device.
    return FlowLog(std::move(all), "cohortsim seed=" + std::to_string(config.seed));
}

}  // namespace aitrace
