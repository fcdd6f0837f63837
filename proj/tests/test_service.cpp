#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <thread>
#include <unistd.h>

#include "httplib.h"
#include "json.hpp"

#include "aitrace/service.hpp"

using namespace aitrace;
using namespace aitrace::enrollment;
using json = nlohmann::json;

namespace {

class Running {
public:
    explicit Running(Registry& reg) : service_(reg) {
        port_ = service_.bind("127.0.0.1", 0);
        thread_ = std::thread([this] { service_.listen(); });
        while (!service_.running()) std::this_thread::yield();
    }
    ~Running() {
        service_.stop();
        thread_.join();
    }
    int port() const { return port_; }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_connection_timeout(5);
        return c;
    }

private:
    Service service_;
    int port_ = 0;
    std::thread thread_;
};

json body(const httplib::Result& r) {
    REQUIRE(r);
    return json::parse(r->body);
}

const char* kJson = "application/json";

}  // namespace

TEST_CASE("status mapping") {
    CHECK(http_status(ErrorCode::ConsentRequired) == 400);
    CHECK(http_status(ErrorCode::UnknownPid) == 404);
    CHECK(http_status(ErrorCode::Withdrawn) == 403);
    CHECK(http_status(ErrorCode::DeviceLimitReached) == 409);
    CHECK(http_status(ErrorCode::AddressPoolExhausted) == 503);
}

TEST_CASE("enrollment round trip over HTTP") {
    Registry reg(EnrollmentConfig{});
    Running srv(reg);
    auto cli = srv.client();

    auto health = cli.Get("/health");
    REQUIRE(health);
    CHECK(health->status == 200);

    auto refused = cli.Post("/enroll", R"({"consent":false})", kJson);
    REQUIRE(refused);
    CHECK(refused->status == 400);
    CHECK(body(refused)["error"] == "ConsentRequired");

    auto enrolled = cli.Post("/enroll", R"({"consent":true})", kJson);
    REQUIRE(enrolled);
    CHECK(enrolled->status == 201);
    const std::string pid = body(enrolled)["pid"];

    auto dev = cli.Post("/participants/" + pid + "/devices", "{}", kJson);
    REQUIRE(dev);
    CHECK(dev->status == 201);
    auto d = body(dev);
    const std::string ip = d["device_ip"];
    CHECK(std::string(d["peer_config"]).find("Address = " + ip + "/32") != std::string::npos);

    // Second device through the header form, third refused.
    httplib::Headers hdr{{"X-Participant-Pid", pid}};
    auto second = cli.Post("/participants/me/devices", hdr, "{}", kJson);
    REQUIRE(second);
    CHECK(second->status == 201);
    auto third = cli.Post("/participants/me/devices", hdr, "{}", kJson);
    REQUIRE(third);
    CHECK(third->status == 409);
    CHECK(body(third)["error"] == "DeviceLimitReached");

    auto info = cli.Get("/participants/me", hdr);
    REQUIRE(info);
    CHECK(info->status == 200);
    CHECK(body(info)["devices"].size() == 2);
    auto no_header = cli.Get("/participants/me");
    REQUIRE(no_header);
    CHECK(no_header->status == 400);

    auto hb1 = cli.Post("/devices/" + ip + "/heartbeat", R"({"connected":true,"at":"2030-01-01T00:00:00Z"})", kJson);
    REQUIRE(hb1);
    CHECK(hb1->status == 200);
    auto hb2 = cli.Post("/devices/" + ip + "/heartbeat", R"({"connected":true,"at":"2030-01-01T00:10:00Z"})", kJson);
    CHECK(body(hb2)["cumulative_connected_ms"] == 600000);
    auto stale = cli.Post("/devices/" + ip + "/heartbeat", R"({"connected":true,"at":"2030-01-01T00:05:00Z"})", kJson);
    REQUIRE(stale);
    CHECK(stale->status == 409);

    auto st = cli.Get("/devices/" + ip + "/status?now=2030-01-01T13:00:00Z");
    REQUIRE(st);
    CHECK(st->status == 200);
    CHECK(body(st)["stale"] == true);
    auto rem = cli.Get("/admin/reminders?now=2030-01-01T13:00:00Z");
    CHECK(body(rem)["reminders"].size() == 2);

    auto bad_ip = cli.Get("/devices/not-an-ip/status");
    REQUIRE(bad_ip);
    CHECK(bad_ip->status == 400);
    auto unknown = cli.Get("/devices/10.99.0.1/status");
    REQUIRE(unknown);
    CHECK(unknown->status == 404);

    auto regen = cli.Post("/participants/" + pid + "/regenerate", "", kJson);
    REQUIRE(regen);
    CHECK(regen->status == 200);
    const std::string fresh = body(regen)["pid"];
    CHECK(fresh != pid);
    auto old = cli.Get("/participants/" + pid);
    REQUIRE(old);
    CHECK(old->status == 404);

    auto wd = cli.Post("/participants/" + fresh + "/withdraw", "", kJson);
    REQUIRE(wd);
    CHECK(body(wd)["status"] == "withdrawn");
    auto after = cli.Post("/participants/" + fresh + "/devices", "{}", kJson);
    REQUIRE(after);
    CHECK(after->status == 403);

    auto garbage = cli.Post("/enroll", "{not json", kJson);
    REQUIRE(garbage);
    CHECK(garbage->status == 400);
}

TEST_CASE("binding an occupied port fails") {
    Registry reg(EnrollmentConfig{});
    Running first(reg);
    Service second(reg);
    CHECK_THROWS_AS(second.bind("127.0.0.1", first.port()), BindFailure);
}

TEST_CASE("a restarted service serves the persisted registry") {
    auto path = std::filesystem::temp_directory_path() / ("aitrace_service_" + std::to_string(::getpid()) + ".jsonl");
    std::filesystem::remove(path);
    std::string pid;
    {
        Registry reg(EnrollmentConfig{}, path);
        Running srv(reg);
        auto cli = srv.client();
        pid = body(cli.Post("/enroll", R"({"consent":true})", kJson))["pid"];
        cli.Post("/participants/" + pid + "/devices", "{}", kJson);
    }
    Registry reg(EnrollmentConfig{}, path);
    Running srv(reg);
    auto cli = srv.client();
    auto info = cli.Get("/participants/" + pid);
    REQUIRE(info);
    CHECK(info->status == 200);
    CHECK(body(info)["devices"].size() == 1);
    std::filesystem::remove(path);
}
