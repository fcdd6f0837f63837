#ifndef AITRACE_CATALOG_HPP
#define AITRACE_CATALOG_HPP

#include <compare>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace aitrace {

enum class ToolKind { ChatGPT, Claude, Copilot, DeepSeek, Gemini, Grok, Perplexity, Other };

/// An AI tool. Known tools compare by kind; `Other` tools by name.
class Tool {
public:
    Tool() = default;
    Tool(ToolKind kind) : kind_(kind) {}  // NOLINT: implicit on purpose
    static Tool other(std::string name);

    /// Case-insensitive for known tools ("chatgpt" → ChatGPT); anything else becomes Other(name).
    static Tool parse(std::string_view name);

    ToolKind kind() const { return kind_; }
    std::string display_name() const;

    friend bool operator==(const Tool& a, const Tool& b) { return a.kind_ == b.kind_ && a.other_ == b.other_; }
    friend std::strong_ordering operator<=>(const Tool& a, const Tool& b) {
        if (auto c = a.kind_ <=> b.kind_; c != 0) return c;
        return a.other_ <=> b.other_;
    }

private:
    ToolKind kind_ = ToolKind::Other;
    std::string other_;
};

/// The seven tools in the curated list, in canonical order.
const std::vector<Tool>& known_tools();

enum class MatchKind { Exact, Suffix };

struct DomainRule {
    std::string pattern;
    Tool tool;
    MatchKind match_kind = MatchKind::Suffix;

    friend bool operator==(const DomainRule&, const DomainRule&) = default;
};

class CatalogError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CatalogNotFound : public CatalogError {
public:
    using CatalogError::CatalogError;
};

/// Immutable hostname → tool rule set.
///
/// Suffix rules match on label boundaries, so `chatgpt.com` covers
/// `ws.chatgpt.com` but not `notchatgpt.com`. An exact rule beats any suffix
/// rule; among suffix rules the longest wins.
class Catalog {
public:
    Catalog() = default;
    /// Throws CatalogError on an invalid pattern or when the same
    /// (pattern, kind) maps to two tools. Identical duplicates are folded.
    explicit Catalog(std::vector<DomainRule> rules);

    std::optional<Tool> classify(std::string_view hostname) const;

    const std::vector<DomainRule>& rules() const { return rules_; }

    /// Returns a copy with `google.com` and `www.google.com` attributed to Gemini.
    /// This inflates Gemini counts with ordinary search traffic.
    Catalog with_gemini_via_google() const;

    /// Returns a copy with extra rules appended.
    Catalog with_rules(const std::vector<DomainRule>& extra) const;

private:
    std::vector<DomainRule> rules_;
    std::unordered_map<std::string, Tool> exact_;
    std::unordered_map<std::string, Tool> suffix_;
};

using Classifier = std::function<std::optional<Tool>(std::string_view hostname)>;

/// Wraps a catalog (held by reference) as a Classifier.
Classifier classifier_for(const Catalog& catalog);

/// `pattern,match_kind,tool` per line; `#` comments and blank lines ignored.
Catalog load_catalog(std::istream& in);
Catalog load_catalog_file(const std::string& path);
void write_catalog(std::ostream& out, const Catalog& catalog);

/// The curated list shipped with the toolkit (versioned text, see data/default_catalog.csv).
std::string_view default_catalog_text();
inline constexpr std::string_view kDefaultCatalogVersion = "2025.05-1";
Catalog default_catalog(bool gemini_via_google = true);

bool is_valid_pattern(std::string_view pattern);

// App Privacy Report import -------------------------------------------------

struct AprCandidate {
    std::string domain;
    std::string app_label;
    friend auto operator<=>(const AprCandidate&, const AprCandidate&) = default;
};

struct AprDiagnostic {
    std::size_t line_no = 0;
    std::string reason;
};

struct AprImport {
    std::set<AprCandidate> candidates;
    std::vector<AprDiagnostic> diagnostics;
};

class MalformedReport : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads an NDJSON App Privacy Report export. Lines without a domain (e.g.
/// access records) are skipped with a diagnostic; a line that is not JSON
/// throws MalformedReport.
AprImport import_apr(std::istream& report);

/// Human-reviewed `app_label,tool` mapping.
using AprMapping = std::map<std::string, Tool>;
AprMapping load_apr_mapping(std::istream& in);

struct AprResolution {
    std::vector<DomainRule> rules;             // exact rules for mapped labels
    std::set<std::string> unmapped_labels;     // labels awaiting review
};

/// Only candidates whose label appears in `mapping` become rules.
AprResolution resolve_apr(const AprImport& imported, const AprMapping& mapping);

// Exclusion policy -----------------------------------------------------------

using ToolCounts = std::map<Tool, std::uint64_t>;

struct ExclusionPolicy {
    std::set<Tool> exclude_from_totals{ToolKind::Gemini};
    std::set<Tool> drop_entirely{ToolKind::Grok};

    /// Throws std::invalid_argument if the two sets overlap.
    void check() const;
    bool counts_toward_total(const Tool& t) const {
        return !exclude_from_totals.contains(t) && !drop_entirely.contains(t);
    }
    bool dropped(const Tool& t) const { return drop_entirely.contains(t); }
};

struct PolicyTotals {
    std::uint64_t total = 0;
    ToolCounts per_tool;  // every input tool, reported individually
};

PolicyTotals apply_policy(const ToolCounts& counts, const ExclusionPolicy& policy);

}  // namespace aitrace

#endif  // AITRACE_CATALOG_HPP
