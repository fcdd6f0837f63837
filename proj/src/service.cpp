#include "aitrace/service.hpp"

#include "httplib.h"
#include "json.hpp"

namespace aitrace::enrollment {

using nlohmann::json;

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConsentRequired: return 400;
        case ErrorCode::InvalidPid: return 400;
        case ErrorCode::InvalidPublicKey: return 400;
        case ErrorCode::UnknownPid: return 404;
        case ErrorCode::UnknownDevice: return 404;
        case ErrorCode::Withdrawn: return 403;
        case ErrorCode::DeviceLimitReached: return 409;
        case ErrorCode::PidTaken: return 409;
        case ErrorCode::StaleHeartbeat: return 409;
        case ErrorCode::AddressPoolExhausted: return 503;
        case ErrorCode::StoreError: return 500;
    }
    return 500;
}

namespace {

struct BadRequest : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json device_json(const DeviceStatus& s) {
    const auto& d = s.device;
    json j{{"device_ip", d.device_ip.to_string()},
           {"public_key", d.public_key},
           {"created_at", format_rfc3339(d.created_at)},
           {"connected", d.last_connected},
           {"cumulative_connected_s", std::chrono::duration_cast<std::chrono::seconds>(d.cumulative_connected).count()},
           {"cumulative_connected_ms", d.cumulative_connected.count()},
           {"participant_status", to_string(s.participant_status)},
           {"stale", s.stale},
           {"stale_for_s", std::chrono::duration_cast<std::chrono::seconds>(s.staleness).count()}};
    j["last_heartbeat"] = d.last_heartbeat ? json(format_rfc3339(*d.last_heartbeat)) : json(nullptr);
    return j;
}

json body_of(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    auto j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw BadRequest("request body must be a JSON object");
    return j;
}

std::optional<Instant> instant_param(const json& body, const char* key) {
    if (!body.contains(key) || body[key].is_null()) return std::nullopt;
    if (!body[key].is_string()) throw BadRequest(std::string(key) + " must be an RFC 3339 string");
    try {
        return parse_rfc3339(body[key].get<std::string>());
    } catch (const TimeParseError& e) {
        throw BadRequest(e.what());
    }
}

std::optional<Instant> query_now(const httplib::Request& req) {
    if (!req.has_param("now")) return std::nullopt;
    try {
        return parse_rfc3339(req.get_param_value("now"));
    } catch (const TimeParseError& e) {
        throw BadRequest(e.what());
    }
}

Pid pid_of(const httplib::Request& req) {
    std::string token = req.matches[1];
    if (token == "me") {
        token = req.get_header_value("X-Participant-Pid");
        if (token.empty()) throw BadRequest("X-Participant-Pid header required");
    }
    return Pid(token);
}

Ipv4Address ip_of(const httplib::Request& req) {
    auto ip = Ipv4Address::parse(req.matches[1].str());
    if (!ip) throw BadRequest("malformed device address");
    return *ip;
}

void send(httplib::Response& res, int status, const json& j) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

template <class F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const EnrollmentError& e) {
            send(res, http_status(e.code()), {{"error", to_string(e.code())}, {"message", e.what()}});
        } catch (const BadRequest& e) {
            send(res, 400, {{"error", "BadRequest"}, {"message", e.what()}});
        } catch (const json::exception& e) {
            send(res, 400, {{"error", "BadRequest"}, {"message", e.what()}});
        } catch (const std::exception& e) {
            send(res, 500, {{"error", "Internal"}, {"message", e.what()}});
        }
    };
}

}  // namespace

struct Service::Impl {
    Registry& registry;
    httplib::Server server;
    explicit Impl(Registry& r) : registry(r) {}
};

Service::Service(Registry& registry) : impl_(std::make_unique<Impl>(registry)) {
    auto& srv = impl_->server;
    Registry& reg = registry;
    // No SO_REUSEPORT: a second instance on the same port must fail to bind.
    srv.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });

    srv.Get("/health", [](const httplib::Request&, httplib::Response& res) { send(res, 200, {{"status", "ok"}}); });

    srv.Post("/enroll", guarded([&reg](const httplib::Request& req, httplib::Response& res) {
        auto body = body_of(req);
        if (!body.contains("consent") || !body["consent"].is_boolean())
            throw BadRequest("consent (boolean) is required");
        std::optional<std::string> chosen;
        if (body.contains("pid") && body["pid"].is_string()) chosen = body["pid"].get<std::string>();
        auto p = reg.enroll(body["consent"].get<bool>(), chosen);
        send(res, 201, {{"pid", p.pid.str()}, {"status", to_string(p.status)}, {"consent_at", format_rfc3339(p.consent_at)}});
    }));

    srv.Get(R"(/participants/([^/]+))", guarded([&reg](const httplib::Request& req, httplib::Response& res) {
        auto pid = pid_of(req);
        auto p = reg.participant(pid);
        json devices = json::array();
        for (const auto& d : reg.participant_devices(pid, query_now(req))) devices.push_back(device_json(d));
        send(res, 200, {{"status", to_string(p.status)}, {"consent_at", format_rfc3339(p.consent_at)},
                        {"devices", devices}});
    }));

    srv.Post(R"(/participants/([^/]+)/devices)", guarded([&reg](const httplib::Request& req, httplib::Response& res) {
        auto body = body_of(req);
        std::optional<std::string> key;
        if (body.contains("public_key") && body["public_key"].is_string()) key = body["public_key"].get<std::string>();
        auto r = reg.register_device(pid_of(req), key);
        send(res, 201, {{"device_ip", r.device.device_ip.to_string()},
                        {"public_key", r.device.public_key},
                        {"created_at", format_rfc3339(r.device.created_at)},
                        {"peer_config", r.peer_config},
                        {"qr_payload", r.qr_payload}});
    }));

    srv.Post(R"(/participants/([^/]+)/regenerate)", guarded([&reg](const httplib::Request& req, httplib::Response& res) {
        send(res, 200, {{"pid", reg.regenerate_pid(pid_of(req)).str()}});
    }));

    srv.Post(R"(/participants/([^/]+)/withdraw)", guarded([&reg](const httplib::Request& req, httplib::Response& res) {
        auto p = reg.withdraw(pid_of(req));
        send(res, 200, {{"status", to_string(p.status)}});
    }));

    srv.Post(R"(/devices/([^/]+)/heartbeat)", guarded([&reg](const httplib::Request& req, httplib::Response& res) {
        auto body = body_of(req);
        if (!body.contains("connected") || !body["connected"].is_boolean())
            throw BadRequest("connected (boolean) is required");
        auto ip = ip_of(req);
        auto total = reg.heartbeat(ip, body["connected"].get<bool>(), instant_param(body, "at"));
        auto status = reg.device_status(ip, instant_param(body, "at"));
        json j = device_json(status);
        j["cumulative_connected_ms"] = total.count();
        send(res, 200, j);
    }));

    srv.Get(R"(/devices/([^/]+)/status)", guarded([&reg](const httplib::Request& req, httplib::Response& res) {
        send(res, 200, device_json(reg.device_status(ip_of(req), query_now(req))));
    }));

    srv.Get("/admin/reminders", guarded([&reg](const httplib::Request& req, httplib::Response& res) {
        json list = json::array();
        for (const auto& r : reg.reminder_scan(query_now(req))) {
            list.push_back({{"device_ip", r.device_ip.to_string()},
                            {"last_heartbeat", r.last_heartbeat ? json(format_rfc3339(*r.last_heartbeat)) : json(nullptr)},
                            {"stale_for_s", std::chrono::duration_cast<std::chrono::seconds>(r.stale_for).count()}});
        }
        send(res, 200, {{"reminders", list}});
    }));
}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
    auto& srv = impl_->server;
    if (port == 0) {
        int bound = srv.bind_to_any_port(host);
        if (bound <= 0) throw BindFailure("BindFailure: cannot bind " + host);
        return bound;
    }
    if (!srv.bind_to_port(host, port))
        throw BindFailure("BindFailure: cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void Service::listen() { impl_->server.listen_after_bind(); }

void Service::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool Service::running() const { return impl_->server.is_running(); }

}  // namespace aitrace::enrollment
