// aitrace: ingest → classify → sessionize → analyze, plus simulator and enrollment service.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "aitrace/analytics.hpp"
#include "aitrace/catalog.hpp"
#include "aitrace/cohortsim.hpp"
#include "aitrace/flow.hpp"
#include "aitrace/report.hpp"
#include "aitrace/service.hpp"
#include "aitrace/sessionizer.hpp"

namespace fs = std::filesystem;
using namespace aitrace;

namespace {

enum Exit { kOk = 0, kInputError = 2, kConfigError = 3, kInternalError = 4 };

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PolicyFlags {
    std::vector<std::string> exclude{"Gemini"};
    std::vector<std::string> drop{"Grok"};

    ExclusionPolicy build() const {
        ExclusionPolicy p;
        p.exclude_from_totals.clear();
        p.drop_entirely.clear();
        for (const auto& t : exclude) p.exclude_from_totals.insert(Tool::parse(t));
        for (const auto& t : drop) p.drop_entirely.insert(Tool::parse(t));
        try {
            p.check();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        return p;
    }
};

void add_policy_flags(CLI::App* cmd, PolicyFlags& f) {
    cmd->add_option("--exclude", f.exclude, "Tools excluded from AI totals (reported individually)")
        ->delimiter(',')
        ->capture_default_str();
    cmd->add_option("--drop", f.drop, "Tools dropped from analysis entirely")->delimiter(',')->capture_default_str();
}

struct AnalyzeOptions {
    std::vector<std::string> inputs;
    std::string catalog;
    double gap_minutes = 5;
    int tz_offset = -240;
    bool gemini_via_google = true;
    std::string out = "report";
    bool strict = false;
    double duration_bin = 5;
    std::size_t top_k = 0;
    PolicyFlags policy;
};

Catalog load_catalog_or_default(const std::string& path, bool gemini_via_google) {
    if (path.empty()) return default_catalog(gemini_via_google);
    try {
        Catalog c = load_catalog_file(path);
        return gemini_via_google ? c.with_gemini_via_google() : c;
    } catch (const CatalogNotFound&) {
        throw;
    } catch (const CatalogError& e) {
        throw ConfigError(e.what());
    }
}

FlowLog read_inputs(const std::vector<std::string>& paths, bool strict, nlohmann::ordered_json& manifest_inputs) {
    std::vector<FlowLog> logs;
    for (const auto& path : paths) {
        std::ifstream in(path);
        if (!in) throw InputError("cannot open input " + path);
        ParseResult r;
        try {
            r = parse_flow_log(in, format_for_path(path), {strict, path});
        } catch (const MalformedHeader& e) {
            throw InputError(path + ": MalformedHeader: " + e.what());
        } catch (const LineErrorException& e) {
            throw InputError(path + ": " + e.what());
        }
        for (const auto& d : r.diagnostics) std::cerr << path << ':' << d.line_no << ": " << d.reason << '\n';
        manifest_inputs.push_back({{"path", path},
                                   {"sha256", sha256_file(path)},
                                   {"accepted", r.log.size()},
                                   {"rejected", r.diagnostics.size()}});
        logs.push_back(std::move(r.log));
    }
    return FlowLog::merge(logs, "analyze");
}

template <class Fn>
std::string render(Fn fn) {
    std::ostringstream out;
    fn(out);
    return out.str();
}

int cmd_analyze(const AnalyzeOptions& o) {
    GapThreshold gap = [&] {
        try {
            return GapThreshold::minutes(o.gap_minutes);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }();
    TzOffset tz{o.tz_offset};
    try {
        check_tz_offset(tz);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (!(o.duration_bin > 0)) throw ConfigError("--duration-bin must be positive");
    const ExclusionPolicy policy = o.policy.build();
    const Catalog catalog = load_catalog_or_default(o.catalog, o.gemini_via_google);
    const Classifier classify = classifier_for(catalog);

    nlohmann::ordered_json inputs = nlohmann::ordered_json::array();
    const FlowLog flows = read_inputs(o.inputs, o.strict, inputs);

    const auto sessions = sessionize(flows, classify, gap);
    const auto counted = included_sessions(sessions, policy);
    const auto shares = aggregate_shares(flows, classify, policy);
    const auto usage = usage_table(sessions, flows, classify, policy, o.top_k);
    const auto frame = heatmap(flows, classify, policy, std::chrono::hours(1), tz);
    const auto daily = daily_series(counted, tz);
    const auto hours = hour_histogram(flows, classify, tz, policy);
    const auto durations = session_duration_histogram(sessions, o.duration_bin);

    std::vector<Tool> columns;
    for (const auto& t : known_tools())
        if (!policy.dropped(t)) columns.push_back(t);

    const fs::path out(o.out);
    fs::create_directories(out);

    nlohmann::ordered_json sj;
    sj["total_flows"] = shares.total_flows;
    sj["ai_flows"] = shares.ai_flows;
    sj["ai_share"] = shares.ai_share ? nlohmann::ordered_json(*shares.ai_share) : nullptr;
    sj["ai_share_text"] = shares.ai_share_text() ? nlohmann::ordered_json(*shares.ai_share_text()) : nullptr;
    sj["devices_total"] = shares.devices_total;
    sj["devices_with_ai"] = shares.devices_with_ai;
    sj["device_share"] = shares.device_share ? nlohmann::ordered_json(*shares.device_share) : nullptr;
    sj["device_share_text"] = shares.device_share_text() ? nlohmann::ordered_json(*shares.device_share_text()) : nullptr;
    sj["sessions"] = sessions.size();

    std::vector<std::pair<std::string, std::string>> files{
        {"shares.json", sj.dump(2) + "\n"},
        {"usage_table.csv", render([&](std::ostream& s) { write_usage_csv(s, usage, columns); })},
        {"heatmap.csv", render([&](std::ostream& s) { write_heatmap_csv(s, frame); })},
        {"heatmap.svg", heatmap_svg(frame)},
        {"daily.csv", render([&](std::ostream& s) { write_daily_csv(s, daily); })},
        {"daily.svg", daily_svg(daily)},
        {"hours.csv", render([&](std::ostream& s) { write_hours_csv(s, hours); })},
        {"hours.svg", hours_svg(hours, "AI traffic by local hour")},
        {"sessions.csv", render([&](std::ostream& s) { write_sessions_csv(s, sessions); })},
        {"durations.csv", render([&](std::ostream& s) { write_durations_csv(s, durations); })},
        {"durations.svg", durations_svg(durations)},
    };
    for (const auto& [name, body] : files) write_file_atomic(out / name, body);

    nlohmann::ordered_json m;
    m["tool"] = "aitrace";
    m["config"] = {{"gap_minutes", o.gap_minutes},
                   {"tz_offset_minutes", o.tz_offset},
                   {"gemini_via_google", o.gemini_via_google},
                   {"exclude", o.policy.exclude},
                   {"drop", o.policy.drop},
                   {"strict", o.strict},
                   {"duration_bin_minutes", o.duration_bin},
                   {"top_k", o.top_k}};
    if (o.catalog.empty())
        m["catalog"] = {{"source", "builtin"}, {"version", kDefaultCatalogVersion}, {"rules", catalog.rules().size()}};
    else
        m["catalog"] = {{"source", o.catalog}, {"sha256", sha256_file(o.catalog)}, {"rules", catalog.rules().size()}};
    m["inputs"] = inputs;
    nlohmann::ordered_json outputs = nlohmann::ordered_json::array();
    for (const auto& [name, body] : files) outputs.push_back(name);
    m["outputs"] = outputs;
    write_file_atomic(out / "run_manifest.json", m.dump(2) + "\n");

    std::cout << "flows=" << flows.size() << " ai_flows=" << shares.ai_flows << " sessions=" << sessions.size()
              << " devices=" << shares.devices_total << " -> " << out.string() << '\n';
    return kOk;
}

int cmd_simulate(const std::string& config_path, const std::optional<std::uint64_t>& seed, const std::string& out) {
    CohortConfig cfg;
    try {
        if (!config_path.empty()) cfg = load_cohort_config(config_path);
        if (seed) cfg.seed = *seed;
        cfg.check();
    } catch (const InvalidConfig& e) {
        throw ConfigError(std::string("InvalidConfig: ") + e.what());
    }
    FlowLog log = generate(cfg);
    auto text = serialize(log, format_for_path(out));
    if (out == "-")
        std::cout << text;
    else
        write_file_atomic(out, text);
    std::cerr << "generated " << log.size() << " flows for " << cfg.n_devices << " devices\n";
    return kOk;
}

enrollment::Service* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

struct ServeOptions {
    std::string bind = "127.0.0.1:8080";
    std::string store = "enrollment.store.jsonl";
    std::string server_public_key;
    std::string endpoint = "vpn.example.edu:51820";
    std::string dns;
    double staleness_hours = 12;
    double quarantine_hours = 72;
    bool revoke_on_regenerate = false;
};

int cmd_serve(const ServeOptions& o) {
    auto colon = o.bind.rfind(':');
    if (colon == std::string::npos) throw ConfigError("--bind expects host:port");
    int port = 0;
    try {
        port = std::stoi(o.bind.substr(colon + 1));
    } catch (const std::exception&) {
        throw ConfigError("--bind port is not a number");
    }
    enrollment::EnrollmentConfig cfg;
    cfg.server_public_key = o.server_public_key;
    cfg.endpoint = o.endpoint;
    cfg.dns = o.dns;
    cfg.staleness_window = Millis(static_cast<std::int64_t>(o.staleness_hours * 3'600'000));
    cfg.address_quarantine = Millis(static_cast<std::int64_t>(o.quarantine_hours * 3'600'000));
    cfg.revoke_on_regenerate = o.revoke_on_regenerate;
    std::unique_ptr<enrollment::Registry> registry;
    try {
        registry = std::make_unique<enrollment::Registry>(cfg, fs::path(o.store));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    enrollment::Service service(*registry);
    int bound = service.bind(o.bind.substr(0, colon), port);
    g_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on " << o.bind.substr(0, colon) << ':' << bound << " (store " << o.store << ", "
              << registry->participant_count() << " participants)" << std::endl;
    service.listen();
    g_service = nullptr;
    return kOk;
}

int cmd_check_totals(const std::string& table, const PolicyFlags& flags) {
    std::ifstream in(table);
    if (!in) throw InputError("cannot open " + table);
    std::vector<ReportedUsageRow> rows;
    try {
        rows = load_reported_usage(in);
    } catch (const std::runtime_error& e) {
        throw InputError(e.what());
    }
    auto bad = check_reported_totals(rows, flags.build());
    std::cout << "device,computed_total,reported_total,residual\n";
    for (const auto& d : bad)
        std::cout << d.device << ',' << d.computed_total << ',' << d.reported_total << ',' << d.residual << '\n';
    std::cerr << rows.size() - bad.size() << " of " << rows.size() << " rows consistent\n";
    return kOk;
}

int cmd_import_apr(const std::string& report, const std::string& mapping, const std::string& out) {
    std::ifstream rin(report);
    if (!rin) throw InputError("cannot open " + report);
    std::ifstream min(mapping);
    if (!min) throw InputError("cannot open " + mapping);
    AprImport imported;
    try {
        imported = import_apr(rin);
    } catch (const MalformedReport& e) {
        throw InputError(std::string("MalformedReport: ") + e.what());
    }
    for (const auto& d : imported.diagnostics) std::cerr << report << ':' << d.line_no << ": " << d.reason << '\n';
    auto resolved = resolve_apr(imported, load_apr_mapping(min));
    for (const auto& label : resolved.unmapped_labels) std::cerr << "unmapped app label: " << label << '\n';
    std::string text = render([&](std::ostream& s) { write_catalog(s, Catalog(resolved.rules)); });
    if (out.empty() || out == "-")
        std::cout << text;
    else
        write_file_atomic(out, text);
    return kOk;
}

int cmd_trace(const std::vector<std::string>& inputs, const std::string& device, const std::string& tool,
              int tz_offset, const std::string& catalog_path, bool gemini_via_google) {
    auto ip = Ipv4Address::parse(device);
    if (!ip) throw InputError("malformed device address " + device);
    TzOffset tz{tz_offset};
    try {
        check_tz_offset(tz);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const Catalog catalog = load_catalog_or_default(catalog_path, gemini_via_google);
    nlohmann::ordered_json ignored = nlohmann::ordered_json::array();
    const FlowLog flows = read_inputs(inputs, false, ignored);
    HourHistogram h;
    try {
        h = device_hourly_trace(flows, classifier_for(catalog), *ip, Tool::parse(tool), tz);
    } catch (const UnknownDevice& e) {
        throw InputError(e.what());
    }
    write_hours_csv(std::cout, h);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"aitrace: metadata-only AI-tool traffic analytics"};
    app.require_subcommand(1);

    AnalyzeOptions ao;
    auto* analyze = app.add_subcommand("analyze", "Run the analytics pipeline and write a report bundle");
    analyze->add_option("--input", ao.inputs, "Flow logs (.flows.csv or .flows.jsonl)")->required();
    analyze->add_option("--catalog", ao.catalog, "Domain catalog file (default: built-in)");
    analyze->add_option("--gap", ao.gap_minutes, "Inactivity gap in minutes")->capture_default_str();
    analyze->add_option("--tz-offset", ao.tz_offset, "Local time offset from UTC in minutes")->capture_default_str();
    analyze->add_option("--gemini-via-google", ao.gemini_via_google,
                        "Count google.com as Gemini (inflates Gemini counts)")
        ->capture_default_str();
    analyze->add_option("--out", ao.out, "Output directory")->capture_default_str();
    analyze->add_flag("--strict", ao.strict, "Abort on the first rejected line");
    analyze->add_option("--duration-bin", ao.duration_bin, "Session duration histogram bin width, minutes")
        ->capture_default_str();
    analyze->add_option("--top-k", ao.top_k, "Keep only the top K devices in the usage table (0 = all)");
    add_policy_flags(analyze, ao.policy);

    std::string sim_config, sim_out = "-";
    std::optional<std::uint64_t> sim_seed;
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic cohort flow log");
    simulate->add_option("--config", sim_config, "Cohort config file (key = value)");
    simulate->add_option("--seed", sim_seed, "Override the config seed");
    simulate->add_option("--out", sim_out, "Output path (.flows.csv / .flows.jsonl, - for stdout)")
        ->capture_default_str();

    ServeOptions so;
    auto* serve = app.add_subcommand("serve", "Run the enrollment HTTP/JSON service");
    serve->add_option("--bind", so.bind, "host:port")->capture_default_str();
    serve->add_option("--store", so.store, "Append-only store file")->capture_default_str();
    serve->add_option("--server-public-key", so.server_public_key, "VPN server public key (base64)");
    serve->add_option("--endpoint", so.endpoint, "VPN endpoint host:port")->capture_default_str();
    serve->add_option("--dns", so.dns, "DNS server written into peer configs");
    serve->add_option("--staleness-hours", so.staleness_hours, "Reminder staleness window")->capture_default_str();
    serve->add_option("--quarantine-hours", so.quarantine_hours, "Released address quarantine")
        ->capture_default_str();
    serve->add_flag("--revoke-on-regenerate", so.revoke_on_regenerate, "Release devices when a PID is regenerated");

    std::string table;
    PolicyFlags check_policy;
    auto* check = app.add_subcommand("check-totals", "Report rows whose printed totals disagree with the policy");
    check->add_option("--table", table, "CSV: device,<tools...>,total")->required();
    add_policy_flags(check, check_policy);

    std::string apr_report, apr_mapping, apr_out;
    auto* apr = app.add_subcommand("import-apr", "Turn an App Privacy Report into reviewed catalog rules");
    apr->add_option("--report", apr_report, "NDJSON App Privacy Report")->required();
    apr->add_option("--mapping", apr_mapping, "Reviewed app_label,tool mapping")->required();
    apr->add_option("--out", apr_out, "Catalog output (default stdout)");

    std::vector<std::string> trace_inputs;
    std::string trace_device, trace_tool = "ChatGPT", trace_catalog;
    int trace_tz = -240;
    bool trace_gemini = true;
    auto* trace = app.add_subcommand("trace", "Per-hour bytes for one device and tool");
    trace->add_option("--input", trace_inputs, "Flow logs")->required();
    trace->add_option("--device", trace_device, "Device address")->required();
    trace->add_option("--tool", trace_tool, "Tool name")->capture_default_str();
    trace->add_option("--tz-offset", trace_tz, "Local time offset from UTC in minutes")->capture_default_str();
    trace->add_option("--catalog", trace_catalog, "Domain catalog file (default: built-in)");
    trace->add_option("--gemini-via-google", trace_gemini, "Count google.com as Gemini")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        if (*analyze) return cmd_analyze(ao);
        if (*simulate) return cmd_simulate(sim_config, sim_seed, sim_out);
        if (*serve) return cmd_serve(so);
        if (*check) return cmd_check_totals(table, check_policy);
        if (*apr) return cmd_import_apr(apr_report, apr_mapping, apr_out);
        if (*trace) return cmd_trace(trace_inputs, trace_device, trace_tool, trace_tz, trace_catalog, trace_gemini);
    } catch (const CatalogNotFound& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kInputError;
    } catch (const enrollment::BindFailure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kInternalError;
    }
    return kInternalError;
}
