#include "aitrace/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace aitrace {

namespace {

constexpr std::string_view kDefaultCatalog = R"(# aitrace default AI-tool domain catalog, version 2025.05-1
# Curated list; extend via App Privacy Report import + reviewed mapping.
# pattern,match_kind,tool
chatgpt.com,suffix,ChatGPT
ws.chatgpt.com,exact,ChatGPT
openai.com,suffix,ChatGPT
oaistatic.com,suffix,ChatGPT
oaiusercontent.com,suffix,ChatGPT
claude.ai,suffix,Claude
anthropic.com,suffix,Claude
copilot.microsoft.com,suffix,Copilot
githubcopilot.com,suffix,Copilot
sydney.bing.com,exact,Copilot
deepseek.com,suffix,DeepSeek
gemini.google.com,suffix,Gemini
bard.google.com,suffix,Gemini
generativelanguage.googleapis.com,exact,Gemini
grok.com,suffix,Grok
x.ai,suffix,Grok
perplexity.ai,suffix,Perplexity
suggest.perplexity.ai,exact,Perplexity
pplx.ai,suffix,Perplexity
)";

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

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
            out.push_back(trim(s.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

}  // namespace

Tool Tool::other(std::string name) {
    Tool t(ToolKind::Other);
    t.other_ = std::move(name);
    return t;
}

Tool Tool::parse(std::string_view name) {
    std::string key = lower(trim(name));
    static const std::pair<std::string_view, ToolKind> table[] = {
        {"chatgpt", ToolKind::ChatGPT}, {"claude", ToolKind::Claude},         {"copilot", ToolKind::Copilot},
        {"deepseek", ToolKind::DeepSeek}, {"gemini", ToolKind::Gemini},       {"grok", ToolKind::Grok},
        {"perplexity", ToolKind::Perplexity},
    };
    for (const auto& [k, kind] : table)
        if (key == k) return Tool(kind);
    return other(std::string(trim(name)));
}

std::string Tool::display_name() const {
    switch (kind_) {
        case ToolKind::ChatGPT: return "ChatGPT";
        case ToolKind::Claude: return "Claude";
        case ToolKind::Copilot: return "Copilot";
        case ToolKind::DeepSeek: return "DeepSeek";
        case ToolKind::Gemini: return "Gemini";
        case ToolKind::Grok: return "Grok";
        case ToolKind::Perplexity: return "Perplexity";
        case ToolKind::Other: return other_;
    }
    return other_;
}

const std::vector<Tool>& known_tools() {
    static const std::vector<Tool> tools{ToolKind::ChatGPT, ToolKind::Claude, ToolKind::Copilot,
                                         ToolKind::DeepSeek, ToolKind::Gemini, ToolKind::Grok,
                                         ToolKind::Perplexity};
    return tools;
}

bool is_valid_pattern(std::string_view p) {
    if (p.empty() || p.front() == '.' || p.back() == '.') return false;
    char prev = 0;
    for (char c : p) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '.' || c == '_';
        if (!ok) return false;
        if (c == '.' && prev == '.') return false;
        prev = c;
    }
    return true;
}

Catalog::Catalog(std::vector<DomainRule> rules) {
    for (auto& r : rules) {
        if (!is_valid_pattern(r.pattern)) throw CatalogError("invalid domain pattern '" + r.pattern + "'");
        auto& index = r.match_kind == MatchKind::Exact ? exact_ : suffix_;
        auto [it, inserted] = index.emplace(r.pattern, r.tool);
        if (!inserted) {
            if (it->second != r.tool)
                throw CatalogError("conflicting rules for '" + r.pattern + "': " + it->second.display_name() +
                                   " vs " + r.tool.display_name());
            continue;
        }
        rules_.push_back(std::move(r));
    }
}

std::optional<Tool> Catalog::classify(std::string_view host) const {
    if (host.empty()) return std::nullopt;
    if (auto it = exact_.find(std::string(host)); it != exact_.end()) return it->second;
    // Walk label-boundary suffixes from longest to shortest.
    std::string_view rest = host;
    while (true) {
        if (auto it = suffix_.find(std::string(rest)); it != suffix_.end()) return it->second;
        auto dot = rest.find('.');
        if (dot == std::string_view::npos) break;
        rest.remove_prefix(dot + 1);
    }
    return std::nullopt;
}

Catalog Catalog::with_gemini_via_google() const {
    return with_rules({{"google.com", ToolKind::Gemini, MatchKind::Exact},
                       {"www.google.com", ToolKind::Gemini, MatchKind::Exact}});
}

Catalog Catalog::with_rules(const std::vector<DomainRule>& extra) const {
    std::vector<DomainRule> all = rules_;
    all.insert(all.end(), extra.begin(), extra.end());
    return Catalog(std::move(all));
}

Classifier classifier_for(const Catalog& catalog) {
    return [&catalog](std::string_view host) { return catalog.classify(host); };
}

Catalog load_catalog(std::istream& in) {
    std::vector<DomainRule> rules;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto s = trim(line);
        if (s.empty() || s.front() == '#') continue;
        auto f = split(s, ',');
        if (f.size() != 3)
            throw CatalogError("catalog line " + std::to_string(line_no) + ": expected pattern,match_kind,tool");
        if (f[0] == "pattern") continue;  // optional header
        std::string kind = lower(f[1]);
        MatchKind mk;
        if (kind == "exact")
            mk = MatchKind::Exact;
        else if (kind == "suffix")
            mk = MatchKind::Suffix;
        else
            throw CatalogError("catalog line " + std::to_string(line_no) + ": unknown match kind '" + kind + "'");
        rules.push_back({lower(f[0]), Tool::parse(f[2]), mk});
    }
    return Catalog(std::move(rules));
}

Catalog load_catalog_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CatalogNotFound("CatalogNotFound: " + path);
    return load_catalog(in);
}

void write_catalog(std::ostream& out, const Catalog& catalog) {
    for (const auto& r : catalog.rules())
        out << r.pattern << ',' << (r.match_kind == MatchKind::Exact ? "exact" : "suffix") << ','
            << r.tool.display_name() << '\n';
}

std::string_view default_catalog_text() { return kDefaultCatalog; }

Catalog default_catalog(bool gemini_via_google) {
    std::istringstream in{std::string(kDefaultCatalog)};
    Catalog c = load_catalog(in);
    return gemini_via_google ? c.with_gemini_via_google() : c;
}

AprImport import_apr(std::istream& report) {
    AprImport out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(report, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw MalformedReport("line " + std::to_string(line_no) + ": not a JSON object");
        std::string label;
        for (const char* key : {"bundleID", "bundleId", "bundle_id", "app", "appName"}) {
            if (j.contains(key) && j[key].is_string()) {
                label = j[key].get<std::string>();
                break;
            }
        }
        if (!j.contains("domain") || !j["domain"].is_string() || j["domain"].get<std::string>().empty()) {
            out.diagnostics.push_back({line_no, "no domain field"});
            continue;
        }
        if (label.empty()) {
            out.diagnostics.push_back({line_no, "no app label"});
            continue;
        }
        std::string domain = lower(trim(j["domain"].get<std::string>()));
        while (!domain.empty() && domain.back() == '.') domain.pop_back();
        if (!is_valid_pattern(domain)) {
            out.diagnostics.push_back({line_no, "invalid domain '" + domain + "'"});
            continue;
        }
        out.candidates.insert({std::move(domain), std::move(label)});
    }
    return out;
}

AprMapping load_apr_mapping(std::istream& in) {
    AprMapping m;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto s = trim(line);
        if (s.empty() || s.front() == '#') continue;
        auto comma = s.rfind(',');
        if (comma == std::string_view::npos)
            throw CatalogError("mapping line " + std::to_string(line_no) + ": expected app_label,tool");
        auto label = trim(s.substr(0, comma));
        auto tool = trim(s.substr(comma + 1));
        if (label == "app_label") continue;
        m[std::string(label)] = Tool::parse(tool);
    }
    return m;
}

AprResolution resolve_apr(const AprImport& imported, const AprMapping& mapping) {
    AprResolution out;
    std::map<std::string, Tool> seen;
    for (const auto& c : imported.candidates) {
        auto it = mapping.find(c.app_label);
        if (it == mapping.end()) {
            out.unmapped_labels.insert(c.app_label);
            continue;
        }
        auto [pos, inserted] = seen.emplace(c.domain, it->second);
        if (!inserted) {
            if (pos->second != it->second)
                throw CatalogError("domain '" + c.domain + "' reported under labels mapped to different tools");
            continue;
        }
        out.rules.push_back({c.domain, it->second, MatchKind::Exact});
    }
    return out;
}

void ExclusionPolicy::check() const {
    for (const auto& t : exclude_from_totals)
        if (drop_entirely.contains(t))
            throw std::invalid_argument("tool " + t.display_name() + " is both excluded and dropped");
}

PolicyTotals apply_policy(const ToolCounts& counts, const ExclusionPolicy& policy) {
    PolicyTotals out;
    out.per_tool = counts;
    for (const auto& [tool, n] : counts)
        if (policy.counts_toward_total(tool)) out.total += n;
    return out;
}

}  // namespace aitrace
