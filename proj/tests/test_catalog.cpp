#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <random>
#include <sstream>

#include "aitrace/analytics.hpp"
#include "aitrace/catalog.hpp"

using namespace aitrace;

TEST_CASE("classification of documented domains") {
    auto c = default_catalog();
    CHECK(c.classify("ws.chatgpt.com") == Tool(ToolKind::ChatGPT));
    CHECK(c.classify("chatgpt.com") == Tool(ToolKind::ChatGPT));
    CHECK(c.classify("suggest.perplexity.ai") == Tool(ToolKind::Perplexity));
    CHECK(c.classify("perplexity.ai") == Tool(ToolKind::Perplexity));
    CHECK_FALSE(c.classify("example.com"));
    CHECK(c.classify("google.com") == Tool(ToolKind::Gemini));
    CHECK_FALSE(default_catalog(false).classify("google.com"));
    CHECK_FALSE(c.classify("mail.google.com"));
}

TEST_CASE("suffix rules respect label boundaries") {
    auto c = default_catalog();
    CHECK_FALSE(c.classify("notchatgpt.com"));
    CHECK_FALSE(c.classify("chatgpt.com.evil.net"));
    CHECK(c.classify("a.b.chatgpt.com") == Tool(ToolKind::ChatGPT));
}

TEST_CASE("exact beats suffix, longer suffix beats shorter") {
    Catalog c({{"example.com", Tool::other("Broad"), MatchKind::Suffix},
               {"ai.example.com", Tool::other("Narrow"), MatchKind::Suffix},
               {"x.ai.example.com", Tool::other("Pinned"), MatchKind::Exact}});
    CHECK(c.classify("www.example.com")->display_name() == "Broad");
    CHECK(c.classify("y.ai.example.com")->display_name() == "Narrow");
    CHECK(c.classify("x.ai.example.com")->display_name() == "Pinned");
    CHECK(c.classify("z.x.ai.example.com")->display_name() == "Narrow");
}

TEST_CASE("conflicting rules are rejected, identical duplicates folded") {
    CHECK_THROWS_AS(Catalog({{"chatgpt.com", ToolKind::ChatGPT, MatchKind::Suffix},
                             {"chatgpt.com", ToolKind::Claude, MatchKind::Suffix}}),
                    CatalogError);
    Catalog ok({{"chatgpt.com", ToolKind::ChatGPT, MatchKind::Suffix},
                {"chatgpt.com", ToolKind::ChatGPT, MatchKind::Suffix},
                {"chatgpt.com", ToolKind::Claude, MatchKind::Exact}});
    CHECK(ok.rules().size() == 2);
    CHECK_THROWS_AS(Catalog({{"Bad Domain", ToolKind::ChatGPT, MatchKind::Suffix}}), CatalogError);
}

TEST_CASE("shipped catalog file matches the built-in text") {
    std::ifstream in(AITRACE_DATA_DIR "/default_catalog.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == default_catalog_text());
    CHECK_THROWS_AS(load_catalog_file("/nonexistent/catalog.csv"), CatalogNotFound);
}

TEST_CASE("catalog write/load round trip") {
    auto c = default_catalog();
    std::stringstream ss;
    write_catalog(ss, c);
    auto back = load_catalog(ss);
    CHECK(back.rules() == c.rules());
}

TEST_CASE("property: classify is deterministic and exact/longer rules win") {
    auto c = default_catalog();
    std::mt19937_64 rng(3);
    const std::vector<std::string> labels{"ws", "a", "chatgpt", "com", "ai", "perplexity", "suggest", "google", "x"};
    for (int i = 0; i < 2000; ++i) {
        std::string host;
        int n = std::uniform_int_distribution<int>(1, 4)(rng);
        for (int k = 0; k < n; ++k) {
            if (k) host += '.';
            host += labels[std::uniform_int_distribution<std::size_t>(0, labels.size() - 1)(rng)];
        }
        auto a = c.classify(host), b = c.classify(host);
        CHECK(a == b);
        if (host == "ws.chatgpt.com" || host.ends_with(".chatgpt.com")) CHECK(a == Tool(ToolKind::ChatGPT));
    }
}

TEST_CASE("tool names") {
    CHECK(Tool::parse("chatgpt") == Tool(ToolKind::ChatGPT));
    CHECK(Tool::parse("Gemini") == Tool(ToolKind::Gemini));
    CHECK(Tool::parse("Mistral") == Tool::other("Mistral"));
    CHECK(Tool::parse("Mistral").display_name() == "Mistral");
    CHECK(known_tools().size() == 7);
}

TEST_CASE("app privacy report import") {
    std::ifstream report(AITRACE_FIXTURE_DIR "/sample_apr.ndjson");
    auto imported = import_apr(report);
    CHECK(imported.candidates.size() == 4);  // duplicate chatgpt.com line folded
    REQUIRE(imported.diagnostics.size() == 1);
    CHECK(imported.diagnostics[0].line_no == 4);

    std::ifstream mapping_in(AITRACE_FIXTURE_DIR "/apr_mapping.csv");
    auto mapping = load_apr_mapping(mapping_in);
    auto resolved = resolve_apr(imported, mapping);
    CHECK(resolved.unmapped_labels == std::set<std::string>{"com.example.notes"});
    REQUIRE(resolved.rules.size() == 3);
    Catalog from_apr(resolved.rules);
    CHECK(from_apr.classify("chatgpt.com") == Tool(ToolKind::ChatGPT));
    CHECK(from_apr.classify("suggest.perplexity.ai") == Tool(ToolKind::Perplexity));
    CHECK_FALSE(from_apr.classify("cdn.example-tracker.net"));
}

TEST_CASE("app privacy report edge cases") {
    std::istringstream empty("");
    CHECK(import_apr(empty).candidates.empty());

    std::istringstream dup(
        "{\"domain\":\"claude.ai\",\"bundleID\":\"com.anthropic.claude\"}\n"
        "{\"domain\":\"claude.ai\",\"bundleID\":\"com.anthropic.claude\"}\n"
        "{\"domain\":\"CLAUDE.AI.\",\"bundleID\":\"com.anthropic.claude\"}\n");
    CHECK(import_apr(dup).candidates.size() == 1);

    std::istringstream bad("{\"domain\":\"claude.ai\"\n");
    CHECK_THROWS_AS(import_apr(bad), MalformedReport);

    // Nothing reaches a catalog without a mapping entry.
    std::istringstream one("{\"domain\":\"claude.ai\",\"bundleID\":\"com.anthropic.claude\"}\n");
    auto resolved = resolve_apr(import_apr(one), {});
    CHECK(resolved.rules.empty());
    CHECK(resolved.unmapped_labels.size() == 1);
}

TEST_CASE("apply_policy on published per-device rows") {
    ExclusionPolicy policy;
    ToolCounts d146{{ToolKind::ChatGPT, 915}, {ToolKind::Claude, 294},  {ToolKind::Copilot, 252},
                    {ToolKind::DeepSeek, 183}, {ToolKind::Gemini, 47064}, {ToolKind::Perplexity, 0}};
    auto t = apply_policy(d146, policy);
    CHECK(t.total == 1644);
    CHECK(t.per_tool.at(ToolKind::Gemini) == 47064);

    ToolCounts d204{{ToolKind::ChatGPT, 1839}, {ToolKind::Copilot, 699}, {ToolKind::Gemini, 54656}};
    CHECK(apply_policy(d204, policy).total == 2538);

    ToolCounts zeros{{ToolKind::ChatGPT, 0}, {ToolKind::Gemini, 0}};
    CHECK(apply_policy(zeros, policy).total == 0);

    ToolCounts with_grok{{ToolKind::ChatGPT, 5}, {ToolKind::Grok, 7}};
    CHECK(apply_policy(with_grok, policy).total == 5);
}

TEST_CASE("policy sets must be disjoint") {
    ExclusionPolicy p;
    p.drop_entirely.insert(ToolKind::Gemini);
    CHECK_THROWS_AS(p.check(), std::invalid_argument);
    CHECK_NOTHROW(ExclusionPolicy{}.check());
}

TEST_CASE("property: policy total never exceeds the raw sum; equal iff excluded tools are zero") {
    std::mt19937_64 rng(5);
    ExclusionPolicy policy;
    for (int i = 0; i < 500; ++i) {
        ToolCounts counts;
        std::uint64_t sum = 0, excluded = 0;
        for (const auto& t : known_tools()) {
            auto n = std::uniform_int_distribution<std::uint64_t>(0, 3)(rng) == 0
                         ? 0
                         : std::uniform_int_distribution<std::uint64_t>(0, 100000)(rng);
            counts[t] = n;
            sum += n;
            if (!policy.counts_toward_total(t)) excluded += n;
        }
        auto total = apply_policy(counts, policy).total;
        CHECK(total <= sum);
        CHECK((total == sum) == (excluded == 0));
    }
}
