#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <unistd.h>
#include <set>

#include "aitrace/enrollment.hpp"

using namespace aitrace;
using namespace aitrace::enrollment;
using namespace std::chrono_literals;

namespace {

struct FakeClock {
    Instant now = parse_rfc3339("2025-04-24T12:00:00Z");
    Clock clock() {
        return [this] { return now; };
    }
};

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const EnrollmentError& e) {
        return e.code();
    }
    FAIL("expected EnrollmentError");
    return ErrorCode::StoreError;
}

std::filesystem::path temp_store(const char* name) {
    auto p = std::filesystem::temp_directory_path() / ("aitrace_enroll_" + std::to_string(::getpid()) + "_" + name);
    std::filesystem::remove(p);
    return p;
}

}  // namespace

TEST_CASE("consent is required and PIDs are distinct") {
    Registry reg(EnrollmentConfig{});
    CHECK(code_of([&] { reg.enroll(false); }) == ErrorCode::ConsentRequired);
    CHECK(reg.participant_count() == 0);
    std::set<std::string> pids;
    for (int i = 0; i < 200; ++i) {
        auto p = reg.enroll(true);
        CHECK(p.pid.str().size() == 26);
        pids.insert(p.pid.str());
    }
    CHECK(pids.size() == 200);
}

TEST_CASE("participant-chosen PIDs") {
    Registry reg(EnrollmentConfig{});
    auto p = reg.enroll(true, "my-study-token_1");
    CHECK(p.pid.str() == "my-study-token_1");
    CHECK(code_of([&] { reg.enroll(true, "my-study-token_1"); }) == ErrorCode::PidTaken);
    CHECK(code_of([&] { reg.enroll(true, "short"); }) == ErrorCode::InvalidPid);
    CHECK(code_of([&] { reg.enroll(true, "has space in it"); }) == ErrorCode::InvalidPid);
    CHECK(code_of([&] { reg.participant(Pid("nobody-here")); }) == ErrorCode::UnknownPid);
}

TEST_CASE("device limit and withdrawal") {
    Registry reg(EnrollmentConfig{});
    auto p = reg.enroll(true);
    reg.register_device(p.pid);
    reg.register_device(p.pid);
    CHECK(code_of([&] { reg.register_device(p.pid); }) == ErrorCode::DeviceLimitReached);

    auto w = reg.withdraw(p.pid);
    CHECK(w.status == ParticipantStatus::Withdrawn);
    CHECK(reg.withdraw(p.pid).status == ParticipantStatus::Withdrawn);  // idempotent
    CHECK(code_of([&] { reg.register_device(p.pid); }) == ErrorCode::Withdrawn);
    CHECK(reg.participant_devices(p.pid).empty());
}

TEST_CASE("peer config carries the assigned address") {
    EnrollmentConfig cfg;
    cfg.dns = "10.7.0.1";
    Registry reg(cfg);
    auto p = reg.enroll(true);
    auto r = reg.register_device(p.pid);
    const auto addr = "Address = " + r.device.device_ip.to_string() + "/32";
    CHECK(r.peer_config.find(addr) != std::string::npos);
    CHECK(r.peer_config.find("[Interface]") != std::string::npos);
    CHECK(r.peer_config.find("[Peer]") != std::string::npos);
    CHECK(r.peer_config.find("PublicKey = " + reg.server_public_key()) != std::string::npos);
    CHECK(r.peer_config.find("PrivateKey = ") != std::string::npos);
    CHECK(r.peer_config.find("DNS = 10.7.0.1") != std::string::npos);
    CHECK(r.qr_payload == r.peer_config);
    CHECK(r.device.device_ip.in_study_subnet());
}

TEST_CASE("client-supplied key: no private key in the config") {
    Registry reg(EnrollmentConfig{});
    auto p = reg.enroll(true);
    auto kp = generate_keypair();
    auto r = reg.register_device(p.pid, kp.public_key);
    CHECK(r.device.public_key == kp.public_key);
    CHECK(r.peer_config.find(kp.private_key) == std::string::npos);
    CHECK(r.peer_config.find("# PrivateKey = <generated on this device>") != std::string::npos);
    CHECK(code_of([&] { reg.register_device(p.pid, "not-a-key"); }) == ErrorCode::InvalidPublicKey);
}

TEST_CASE("keypairs are valid and distinct") {
    auto a = generate_keypair(), b = generate_keypair();
    CHECK(is_valid_public_key(a.public_key));
    CHECK(a.public_key.size() == 44);
    CHECK(a.public_key != b.public_key);
    CHECK_FALSE(is_valid_public_key("AAAA"));
    CHECK_FALSE(is_valid_public_key(""));
}

TEST_CASE("property: assigned addresses are unique and inside 10/8") {
    Registry reg(EnrollmentConfig{});
    std::set<Ipv4Address> seen;
    for (int i = 0; i < 300; ++i) {
        auto p = reg.enroll(true);
        for (int d = 0; d < 2; ++d) {
            auto ip = reg.register_device(p.pid).device.device_ip;
            CHECK(ip.in_study_subnet());
            CHECK(seen.insert(ip).second);
        }
    }
}

TEST_CASE("pool exhaustion") {
    EnrollmentConfig cfg;
    cfg.pool_first = *Ipv4Address::parse("10.7.0.2");
    cfg.pool_last = *Ipv4Address::parse("10.7.0.4");
    Registry reg(cfg);
    auto a = reg.enroll(true), b = reg.enroll(true);
    reg.register_device(a.pid);
    reg.register_device(a.pid);
    reg.register_device(b.pid);
    CHECK(code_of([&] { reg.register_device(b.pid); }) == ErrorCode::AddressPoolExhausted);
}

TEST_CASE("regenerating a PID invalidates every earlier token") {
    Registry reg(EnrollmentConfig{});
    auto p = reg.enroll(true);
    auto dev = reg.register_device(p.pid).device.device_ip;
    auto second = reg.regenerate_pid(p.pid);
    auto third = reg.regenerate_pid(second);
    for (const auto& old : {p.pid, second}) {
        CHECK(code_of([&] { reg.participant(old); }) == ErrorCode::UnknownPid);
        CHECK(code_of([&] { reg.register_device(old); }) == ErrorCode::UnknownPid);
        CHECK(code_of([&] { reg.regenerate_pid(old); }) == ErrorCode::UnknownPid);
    }
    auto now = reg.participant(third);
    CHECK(now.id == p.id);
    // Existing tunnels keep working unless revocation is configured.
    CHECK(reg.device_status(dev).device.device_ip == dev);
}

TEST_CASE("regeneration with revocation releases devices") {
    EnrollmentConfig cfg;
    cfg.revoke_on_regenerate = true;
    Registry reg(cfg);
    auto p = reg.enroll(true);
    auto dev = reg.register_device(p.pid).device.device_ip;
    auto fresh = reg.regenerate_pid(p.pid);
    CHECK(code_of([&] { reg.device_status(dev); }) == ErrorCode::UnknownDevice);
    CHECK(reg.participant_devices(fresh).empty());
}

TEST_CASE("heartbeats accumulate connected time") {
    FakeClock fc;
    Registry reg(EnrollmentConfig{}, std::nullopt, fc.clock());
    auto p = reg.enroll(true);
    auto ip = reg.register_device(p.pid).device.device_ip;
    auto t0 = fc.now;
    CHECK(reg.heartbeat(ip, true, t0) == 0ms);
    CHECK(reg.heartbeat(ip, true, t0 + 10min) == 10min);
    CHECK(reg.heartbeat(ip, false, t0 + 20min) == 10min);  // disconnected in between
    CHECK(reg.heartbeat(ip, false, t0 + 30min) == 10min);
    CHECK(reg.heartbeat(ip, true, t0 + 40min) == 10min);
    CHECK(reg.heartbeat(ip, true, t0 + 45min) == 15min);
    CHECK(code_of([&] { reg.heartbeat(ip, true, t0 + 1min); }) == ErrorCode::StaleHeartbeat);
    CHECK(code_of([&] { reg.heartbeat(*Ipv4Address::parse("10.9.9.9"), true, t0); }) == ErrorCode::UnknownDevice);

    auto st = reg.device_status(ip, t0 + 45min + 13h);
    CHECK(st.stale);
    CHECK(st.staleness == 13h);
    CHECK_FALSE(reg.device_status(ip, t0 + 46min).stale);
}

TEST_CASE("reminder scan lists stale devices, most stale first") {
    FakeClock fc;
    Registry reg(EnrollmentConfig{}, std::nullopt, fc.clock());
    auto a = reg.enroll(true), b = reg.enroll(true), c = reg.enroll(true);
    auto ia = reg.register_device(a.pid).device.device_ip;
    auto ib = reg.register_device(b.pid).device.device_ip;
    auto ic = reg.register_device(c.pid).device.device_ip;
    auto t0 = fc.now;
    reg.heartbeat(ia, true, t0 + 1h);
    reg.heartbeat(ib, true, t0 + 5h);
    reg.heartbeat(ic, true, t0 + 20h);
    reg.withdraw(c.pid);

    auto rem = reg.reminder_scan(t0 + 19h);
    REQUIRE(rem.size() == 2);
    CHECK(rem[0].device_ip == ia);
    CHECK(rem[0].stale_for == 18h);
    CHECK(rem[1].device_ip == ib);
    CHECK(reg.reminder_scan(t0 + 12h).empty());
    CHECK(reg.reminder_scan(t0 + 19h).size() == 2);  // no side effects
}

TEST_CASE("released addresses are quarantined before reuse") {
    FakeClock fc;
    EnrollmentConfig cfg;
    cfg.pool_first = *Ipv4Address::parse("10.7.0.2");
    cfg.pool_last = *Ipv4Address::parse("10.7.0.3");
    Registry reg(cfg, std::nullopt, fc.clock());
    auto a = reg.enroll(true);
    auto first = reg.register_device(a.pid).device.device_ip;
    reg.withdraw(a.pid);
    auto b = reg.enroll(true);
    auto second = reg.register_device(b.pid).device.device_ip;
    CHECK(second != first);
    CHECK(code_of([&] { reg.register_device(b.pid); }) == ErrorCode::AddressPoolExhausted);
    fc.now += 72h;
    CHECK(reg.register_device(b.pid).device.device_ip == first);
}

TEST_CASE("store restart preserves the registry") {
    auto path = temp_store("restart.jsonl");
    FakeClock fc;
    Pid kept, withdrawn;
    Ipv4Address ip;
    std::string server_key;
    {
        Registry reg(EnrollmentConfig{}, path, fc.clock());
        server_key = reg.server_public_key();
        auto p = reg.enroll(true);
        ip = reg.register_device(p.pid).device.device_ip;
        reg.register_device(p.pid);
        reg.heartbeat(ip, true, fc.now);
        reg.heartbeat(ip, true, fc.now + 7min);
        kept = reg.regenerate_pid(p.pid);
        withdrawn = reg.enroll(true).pid;
        reg.withdraw(withdrawn);
    }
    Registry again(EnrollmentConfig{}, path, fc.clock());
    CHECK(again.server_public_key() == server_key);
    CHECK(again.participant_count() == 2);
    CHECK(again.participant(kept).devices.size() == 2);
    CHECK(again.device_status(ip).device.cumulative_connected == 7min);
    CHECK(again.participant(withdrawn).status == ParticipantStatus::Withdrawn);
    CHECK(code_of([&] { again.register_device(kept); }) == ErrorCode::DeviceLimitReached);
    // New allocations continue without reusing addresses.
    auto fresh = again.register_device(again.enroll(true).pid).device.device_ip;
    for (auto used : again.participant(kept).devices) CHECK(fresh != used);
    std::filesystem::remove(path);
}

TEST_CASE("corrupt store is reported") {
    auto path = temp_store("corrupt.jsonl");
    {
        std::ofstream out(path);
        out << "{not json\n";
    }
    CHECK(code_of([&] { Registry reg(EnrollmentConfig{}, path); }) == ErrorCode::StoreError);
    std::filesystem::remove(path);
}
