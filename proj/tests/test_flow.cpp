#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>
#include <sstream>

#include "aitrace/flow.hpp"
#include "generators.hpp"

using namespace aitrace;

TEST_CASE("rfc3339 parsing and canonical rendering") {
    auto t = parse_rfc3339("2025-05-13T19:02:00.000Z");
    CHECK(format_rfc3339(t) == "2025-05-13T19:02:00.000Z");
    CHECK(parse_rfc3339("2025-05-13T15:02:00-04:00") == t);
    CHECK(parse_rfc3339("2025-05-13T19:02:00Z") == t);
    CHECK(format_rfc3339(parse_rfc3339("2025-05-13T19:02:00.123456Z")) == "2025-05-13T19:02:00.123Z");
    CHECK_THROWS_AS(parse_rfc3339("2025-05-13 19:02"), TimeParseError);
    CHECK_THROWS_AS(parse_rfc3339("2025-02-30T00:00:00Z"), TimeParseError);
    CHECK_THROWS_AS(parse_rfc3339("2025-05-13T19:02:00"), TimeParseError);
}

TEST_CASE("local hour and day under a fixed offset") {
    TzOffset edt{-240};
    auto t = parse_rfc3339("2025-05-14T02:30:00Z");
    CHECK(local_hour(t, edt) == 22);
    CHECK(format_date(local_day(t, edt)) == "2025-05-13");
    CHECK(local_day_start(local_day(t, edt), edt) == parse_rfc3339("2025-05-13T04:00:00Z"));
    CHECK_THROWS_AS(check_tz_offset(TzOffset{15 * 60}), std::invalid_argument);
    CHECK_NOTHROW(check_tz_offset(TzOffset{-14 * 60}));
}

TEST_CASE("ipv4 parsing") {
    CHECK(Ipv4Address::parse("10.7.0.146")->to_string() == "10.7.0.146");
    CHECK_FALSE(Ipv4Address::parse("10.7.0"));
    CHECK_FALSE(Ipv4Address::parse("10.7.0.256"));
    CHECK_FALSE(Ipv4Address::parse("10.07.0.1"));
    CHECK_FALSE(Ipv4Address::parse("10.7.0.1 "));
    CHECK(Ipv4Address::parse("10.0.0.0")->in_study_subnet());
    CHECK_FALSE(Ipv4Address::parse("11.0.0.0")->in_study_subnet());
}

TEST_CASE("csv line maps fields directly") {
    auto r = parse_flow_log(
        "timestamp,device_ip,hostname,up_bytes,down_bytes\n2025-05-13T19:02:00.000Z,10.7.0.146,chatgpt.com,512,2048\n",
        FlowFormat::Csv);
    REQUIRE(r.log.size() == 1);
    CHECK(r.diagnostics.empty());
    const auto& f = r.log.records().front();
    CHECK(f.timestamp == parse_rfc3339("2025-05-13T19:02:00.000Z"));
    CHECK(f.device_ip.to_string() == "10.7.0.146");
    CHECK(f.hostname == "chatgpt.com");
    CHECK(f.up_bytes == 512);
    CHECK(f.down_bytes == 2048);
}

TEST_CASE("empty input gives an empty log") {
    for (auto fmt : {FlowFormat::Csv, FlowFormat::Jsonl}) {
        auto r = parse_flow_log("", fmt);
        CHECK(r.log.empty());
        CHECK(r.diagnostics.empty());
    }
}

TEST_CASE("header mismatch is fatal") {
    CHECK_THROWS_AS(parse_flow_log("time,ip,host,up,down\n", FlowFormat::Csv), MalformedHeader);
}

TEST_CASE("rejected lines are collected, or abort in strict mode") {
    std::string text =
        "timestamp,device_ip,hostname,up_bytes,down_bytes\n"
        "2025-05-13T19:02:00.000Z,10.7.0.146,chatgpt.com,512,2048\n"
        "2025-05-13T19:03:00.000Z,192.168.1.5,chatgpt.com,1,1\n"
        "2025-05-13T19:04:00.000Z,10.7.0.146,chatgpt.com,-1,1\n"
        "not,a,record\n"
        "2025-05-13T19:05:00.000Z,10.7.0.146,Chat GPT.com,1,1\n"
        "2025-05-13T19:06:00.000Z,10.7.0.146,WS.ChatGPT.com.,1,1\n";
    auto r = parse_flow_log(text, FlowFormat::Csv);
    CHECK(r.input_lines == 6);
    CHECK(r.log.size() == 2);
    REQUIRE(r.diagnostics.size() == 4);
    CHECK(r.diagnostics[0].line_no == 3);
    CHECK(r.diagnostics[0].reason.find("OutsidePrivateStudySubnet") != std::string::npos);
    CHECK(r.diagnostics[1].reason.find("NegativeVolume") != std::string::npos);
    CHECK(r.log.records()[1].hostname == "ws.chatgpt.com");

    try {
        parse_flow_log(text, FlowFormat::Csv, {.strict = true});
        FAIL("strict mode should throw");
    } catch (const LineErrorException& e) {
        CHECK(e.error.line_no == 3);
    }
}

TEST_CASE("jsonl records") {
    std::string text =
        R"({"timestamp":"2025-05-13T19:02:00.000Z","device_ip":"10.7.0.146","hostname":"chatgpt.com","up_bytes":512,"down_bytes":2048})"
        "\n"
        R"({"timestamp":"2025-05-13T19:01:00.000Z","device_ip":"10.7.0.146","hostname":"claude.ai","up_bytes":"x","down_bytes":1})"
        "\n{broken\n";
    auto r = parse_flow_log(text, FlowFormat::Jsonl);
    CHECK(r.log.size() == 1);
    CHECK(r.diagnostics.size() == 2);
    CHECK(r.log.records()[0].down_bytes == 2048);
}

TEST_CASE("validate_record") {
    FlowRecord r{parse_rfc3339("2025-05-13T19:02:00Z"), *Ipv4Address::parse("10.7.0.123"), "chatgpt.com", 1, 2};
    CHECK(validate_record(r).empty());
    r.device_ip = *Ipv4Address::parse("192.168.1.5");
    CHECK(validate_record(r) == std::vector<Violation>{Violation::OutsidePrivateStudySubnet});
    r.device_ip = *Ipv4Address::parse("10.7.0.123");
    r.up_bytes = -1;
    CHECK(validate_record(r) == std::vector<Violation>{Violation::NegativeVolume});
    r.up_bytes = 0;
    r.hostname = "";
    CHECK(validate_record(r) == std::vector<Violation>{Violation::EmptyHostname});
}

TEST_CASE("10,000 shuffled lines come out sorted, matching a sort-then-parse oracle") {
    std::mt19937_64 rng(7);
    auto log = testing::random_log(rng, {.max_flows = 10'000});
    while (log.size() < 10'000) log = testing::random_log(rng, {.max_flows = 12'000});
    std::string csv = serialize(log, FlowFormat::Csv);

    std::vector<std::string> lines;
    std::istringstream in(csv);
    std::string header, line;
    std::getline(in, header);
    while (std::getline(in, line)) lines.push_back(line);
    std::shuffle(lines.begin(), lines.end(), rng);

    std::string shuffled = header + "\n";
    for (const auto& l : lines) shuffled += l + "\n";
    auto parsed = parse_flow_log(shuffled, FlowFormat::Csv);

    // Oracle: canonical timestamps sort lexicographically; sort the text lines, then parse one by one.
    auto sorted_lines = lines;
    std::stable_sort(sorted_lines.begin(), sorted_lines.end(),
                     [](const std::string& a, const std::string& b) { return a.substr(0, 24) < b.substr(0, 24); });
    std::vector<FlowRecord> oracle;
    for (const auto& l : sorted_lines) {
        auto one = parse_flow_log(header + "\n" + l + "\n", FlowFormat::Csv);
        REQUIRE(one.log.size() == 1);
        oracle.push_back(one.log.records()[0]);
    }
    REQUIRE(parsed.log.size() == lines.size());
    CHECK(parsed.diagnostics.empty());
    CHECK(parsed.log.records() == oracle);
}

TEST_CASE("property: round trip and line accounting") {
    std::mt19937_64 rng(11);
    for (int iter = 0; iter < 50; ++iter) {
        auto log = testing::random_log(rng, {.max_flows = 200});
        for (auto fmt : {FlowFormat::Csv, FlowFormat::Jsonl}) {
            auto text = serialize(log, fmt);
            auto back = parse_flow_log(text, fmt);
            CHECK(back.log.records() == log.records());
            CHECK(serialize(back.log, fmt) == text);
            CHECK(back.input_lines == back.log.size() + back.diagnostics.size());
        }
    }
}

TEST_CASE("property: permuting input lines does not change the multiset per timestamp") {
    std::mt19937_64 rng(13);
    for (int iter = 0; iter < 20; ++iter) {
        auto log = testing::random_log(rng, {.max_flows = 300});
        auto records = log.records();
        std::shuffle(records.begin(), records.end(), rng);
        FlowLog permuted(records);
        auto key = [](const FlowRecord& r) {
            return std::tuple(r.timestamp, r.device_ip, r.hostname, r.up_bytes, r.down_bytes);
        };
        auto a = log.records(), b = permuted.records();
        CHECK(std::is_sorted(b.begin(), b.end(),
                             [](const FlowRecord& x, const FlowRecord& y) { return x.timestamp < y.timestamp; }));
        std::sort(a.begin(), a.end(), [&](auto& x, auto& y) { return key(x) < key(y); });
        std::sort(b.begin(), b.end(), [&](auto& x, auto& y) { return key(x) < key(y); });
        CHECK(a == b);
    }
}

TEST_CASE("duplicate records are kept") {
    std::string l = "2025-05-13T19:02:00.000Z,10.7.0.146,chatgpt.com,512,2048\n";
    auto r = parse_flow_log(std::string(kFlowCsvHeader) + "\n" + l + l, FlowFormat::Csv);
    CHECK(r.log.size() == 2);
}
