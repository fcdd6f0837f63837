#include "aitrace/enrollment.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>

#include <sodium.h>

#include "json.hpp"

namespace aitrace::enrollment {

using nlohmann::json;

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConsentRequired: return "ConsentRequired";
        case ErrorCode::UnknownPid: return "UnknownPid";
        case ErrorCode::Withdrawn: return "Withdrawn";
        case ErrorCode::DeviceLimitReached: return "DeviceLimitReached";
        case ErrorCode::UnknownDevice: return "UnknownDevice";
        case ErrorCode::StaleHeartbeat: return "StaleHeartbeat";
        case ErrorCode::PidTaken: return "PidTaken";
        case ErrorCode::InvalidPid: return "InvalidPid";
        case ErrorCode::InvalidPublicKey: return "InvalidPublicKey";
        case ErrorCode::AddressPoolExhausted: return "AddressPoolExhausted";
        case ErrorCode::StoreError: return "StoreError";
    }
    return "Unknown";
}

std::string_view to_string(ParticipantStatus s) {
    return s == ParticipantStatus::Active ? "active" : "withdrawn";
}

namespace {

void ensure_sodium() {
    static const bool ok = sodium_init() >= 0;
    if (!ok) throw std::runtime_error("libsodium initialisation failed");
}

std::string to_base64(const unsigned char* data, std::size_t n) {
    std::string out(sodium_base64_ENCODED_LEN(n, sodium_base64_VARIANT_ORIGINAL), '\0');
    sodium_bin2base64(out.data(), out.size(), data, n, sodium_base64_VARIANT_ORIGINAL);
    out.resize(std::char_traits<char>::length(out.c_str()));
    return out;
}

}  // namespace

Pid Pid::random() {
    ensure_sodium();
    std::array<unsigned char, 16> bytes{};
    randombytes_buf(bytes.data(), bytes.size());
    static constexpr char alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZ234567";
    std::string out;
    unsigned buffer = 0;
    int bits = 0;
    for (unsigned char b : bytes) {
        buffer = (buffer << 8) | b;
        bits += 8;
        while (bits >= 5) {
            out += alphabet[(buffer >> (bits - 5)) & 31u];
            bits -= 5;
        }
    }
    if (bits > 0) out += alphabet[(buffer << (5 - bits)) & 31u];
    return Pid(std::move(out));
}

bool Pid::well_formed(std::string_view t) {
    if (t.size() < 8 || t.size() > 64) return false;
    return std::all_of(t.begin(), t.end(), [](char c) {
        return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    });
}

void EnrollmentConfig::check() const {
    if (!pool_first.in_study_subnet() || !pool_last.in_study_subnet())
        throw std::invalid_argument("address pool must lie in 10.0.0.0/8");
    if (pool_last < pool_first) throw std::invalid_argument("address pool is empty");
    if (max_devices == 0) throw std::invalid_argument("max_devices must be positive");
    if (staleness_window.count() <= 0) throw std::invalid_argument("staleness window must be positive");
    if (address_quarantine.count() < 0) throw std::invalid_argument("quarantine must be non-negative");
    if (!server_public_key.empty() && !is_valid_public_key(server_public_key))
        throw std::invalid_argument("server public key is not a base64 Curve25519 key");
}

KeyPair generate_keypair() {
    ensure_sodium();
    std::array<unsigned char, crypto_scalarmult_curve25519_SCALARBYTES> sk{};
    std::array<unsigned char, crypto_scalarmult_curve25519_BYTES> pk{};
    randombytes_buf(sk.data(), sk.size());
    sk[0] &= 248;
    sk[31] &= 127;
    sk[31] |= 64;
    if (crypto_scalarmult_curve25519_base(pk.data(), sk.data()) != 0)
        throw std::runtime_error("Curve25519 base-point multiplication failed");
    KeyPair kp{to_base64(sk.data(), sk.size()), to_base64(pk.data(), pk.size())};
    sodium_memzero(sk.data(), sk.size());
    return kp;
}

bool is_valid_public_key(std::string_view b64) {
    ensure_sodium();
    std::array<unsigned char, 64> bin{};
    std::size_t len = 0;
    const char* end = nullptr;
    if (sodium_base642bin(bin.data(), bin.size(), b64.data(), b64.size(), nullptr, &len, &end,
                          sodium_base64_VARIANT_ORIGINAL) != 0)
        return false;
    return len == 32 && end == b64.data() + b64.size();
}

std::string render_peer_config(const EnrollmentConfig& c, const std::string& server_public_key, Ipv4Address address,
                               const std::optional<std::string>& private_key) {
    std::string out = "[Interface]\n";
    if (private_key)
        out += "PrivateKey = " + *private_key + "\n";
    else
        out += "# PrivateKey = <generated on this device>\n";
    out += "Address = " + address.to_string() + "/32\n";
    if (!c.dns.empty()) out += "DNS = " + c.dns + "\n";
    out += "\n[Peer]\n";
    out += "PublicKey = " + server_public_key + "\n";
    out += "Endpoint = " + c.endpoint + "\n";
    out += "AllowedIPs = " + c.allowed_ips + "\n";
    if (c.persistent_keepalive > 0) out += "PersistentKeepalive = " + std::to_string(c.persistent_keepalive) + "\n";
    return out;
}

Clock system_clock() {
    return [] { return std::chrono::time_point_cast<Millis>(std::chrono::system_clock::now()); };
}

// ---------------------------------------------------------------------------

struct Registry::Impl {
    std::optional<std::filesystem::path> store;
    std::ofstream log;

    std::map<std::uint64_t, Participant> participants;
    std::map<Pid, std::uint64_t> by_pid;
    std::map<Ipv4Address, DeviceRegistration> active;         // held addresses
    std::map<Ipv4Address, DeviceRegistration> released;       // most recent release per address
    std::uint64_t next_id = 1;
    std::string server_key;

    void append(const json& ev) {
        if (!log.is_open()) return;
        log << ev.dump() << '\n';
        log.flush();
        if (!log) throw EnrollmentError(ErrorCode::StoreError, "failed to append to store");
    }

    static std::string ts(Instant t) { return format_rfc3339(t); }

    void release_devices(Participant& p, Instant at) {
        for (auto ip : p.devices) {
            auto it = active.find(ip);
            if (it == active.end() || it->second.participant != p.id) continue;
            it->second.released_at = at;
            released[ip] = it->second;
            active.erase(it);
        }
    }

    // The single mutation path shared by live operations and replay.
    void apply(const json& ev, const EnrollmentConfig& config) {
        const std::string type = ev.at("type");
        if (type == "server_key") {
            server_key = ev.at("public_key");
        } else if (type == "enroll") {
            Participant p;
            p.id = ev.at("participant");
            p.pid = Pid(ev.at("pid").get<std::string>());
            p.consent_at = parse_rfc3339(ev.at("at").get<std::string>());
            by_pid[p.pid] = p.id;
            next_id = std::max(next_id, p.id + 1);
            participants[p.id] = std::move(p);
        } else if (type == "regenerate") {
            auto& p = participants.at(ev.at("participant"));
            by_pid.erase(p.pid);
            p.pid = Pid(ev.at("pid").get<std::string>());
            by_pid[p.pid] = p.id;
            if (config.revoke_on_regenerate) release_devices(p, parse_rfc3339(ev.at("at").get<std::string>()));
        } else if (type == "withdraw") {
            auto& p = participants.at(ev.at("participant"));
            p.status = ParticipantStatus::Withdrawn;
            release_devices(p, parse_rfc3339(ev.at("at").get<std::string>()));
        } else if (type == "register") {
            DeviceRegistration d;
            d.device_ip = *Ipv4Address::parse(ev.at("device_ip").get<std::string>());
            d.participant = ev.at("participant");
            d.public_key = ev.at("public_key");
            d.created_at = parse_rfc3339(ev.at("at").get<std::string>());
            participants.at(d.participant).devices.push_back(d.device_ip);
            released.erase(d.device_ip);
            active[d.device_ip] = std::move(d);
        } else if (type == "heartbeat") {
            auto& d = active.at(*Ipv4Address::parse(ev.at("device_ip").get<std::string>()));
            const Instant at = parse_rfc3339(ev.at("at").get<std::string>());
            const bool connected = ev.at("connected");
            if (d.last_heartbeat && d.last_connected && connected) d.cumulative_connected += at - *d.last_heartbeat;
            d.last_heartbeat = at;
            d.last_connected = connected;
        } else {
            throw EnrollmentError(ErrorCode::StoreError, "unknown event type '" + type + "'");
        }
    }

    Participant& lookup(const Pid& pid) {
        auto it = by_pid.find(pid);
        if (it == by_pid.end()) throw EnrollmentError(ErrorCode::UnknownPid, "no participant for this PID");
        return participants.at(it->second);
    }

    Participant& lookup_active(const Pid& pid) {
        auto& p = lookup(pid);
        if (p.status == ParticipantStatus::Withdrawn)
            throw EnrollmentError(ErrorCode::Withdrawn, "participant has withdrawn");
        return p;
    }

    std::size_t active_devices(const Participant& p) const {
        return static_cast<std::size_t>(std::count_if(p.devices.begin(), p.devices.end(), [&](Ipv4Address ip) {
            auto it = active.find(ip);
            return it != active.end() && it->second.participant == p.id;
        }));
    }

    std::optional<Ipv4Address> allocate(const EnrollmentConfig& c, Instant now) const {
        for (std::uint64_t v = c.pool_first.value(); v <= c.pool_last.value(); ++v) {
            Ipv4Address ip(static_cast<std::uint32_t>(v));
            if (active.contains(ip)) continue;
            if (auto it = released.find(ip);
                it != released.end() && now - *it->second.released_at < c.address_quarantine)
                continue;
            return ip;
        }
        return std::nullopt;
    }

    DeviceStatus status_of(const DeviceRegistration& d, const EnrollmentConfig& c, Instant now) const {
        DeviceStatus s;
        s.device = d;
        s.participant_status = participants.at(d.participant).status;
        s.staleness = now - d.last_heartbeat.value_or(d.created_at);
        s.stale = s.staleness > c.staleness_window;
        return s;
    }
};

Registry::Registry(EnrollmentConfig config, std::optional<std::filesystem::path> store, Clock clock)
    : config_(std::move(config)), clock_(std::move(clock)), impl_(std::make_unique<Impl>()) {
    config_.check();
    impl_->store = store;
    if (store) {
        std::ifstream in(*store);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            auto ev = json::parse(line, nullptr, false);
            if (ev.is_discarded())
                throw EnrollmentError(ErrorCode::StoreError, "corrupt store line " + std::to_string(line_no));
            try {
                impl_->apply(ev, config_);
            } catch (const json::exception& e) {
                throw EnrollmentError(ErrorCode::StoreError,
                                      "bad event on store line " + std::to_string(line_no) + ": " + e.what());
            } catch (const std::out_of_range& e) {
                throw EnrollmentError(ErrorCode::StoreError,
                                      "dangling reference on store line " + std::to_string(line_no));
            }
        }
        impl_->log.open(*store, std::ios::app);
        if (!impl_->log) throw EnrollmentError(ErrorCode::StoreError, "cannot open store " + store->string());
    }
    if (!config_.server_public_key.empty()) {
        server_public_key_ = config_.server_public_key;
    } else {
        if (impl_->server_key.empty()) {
            json ev{{"type", "server_key"}, {"public_key", generate_keypair().public_key}};
            impl_->append(ev);
            impl_->apply(ev, config_);
        }
        server_public_key_ = impl_->server_key;
    }
}

Registry::~Registry() = default;

Participant Registry::enroll(bool consent, std::optional<std::string> chosen_pid) {
    if (!consent) throw EnrollmentError(ErrorCode::ConsentRequired, "consent must be given before enrollment");
    std::lock_guard lock(mu_);
    Pid pid;
    if (chosen_pid) {
        if (!Pid::well_formed(*chosen_pid))
            throw EnrollmentError(ErrorCode::InvalidPid, "PID must be 8-64 characters of [A-Za-z0-9_-]");
        pid = Pid(*chosen_pid);
        if (impl_->by_pid.contains(pid)) throw EnrollmentError(ErrorCode::PidTaken, "PID already in use");
    } else {
        do pid = Pid::random();
        while (impl_->by_pid.contains(pid));
    }
    const std::uint64_t id = impl_->next_id;
    json ev{{"type", "enroll"}, {"participant", id}, {"pid", pid.str()}, {"at", Impl::ts(clock_())}};
    impl_->append(ev);
    impl_->apply(ev, config_);
    return impl_->participants.at(id);
}

Registration Registry::register_device(const Pid& pid, std::optional<std::string> public_key) {
    std::lock_guard lock(mu_);
    auto& p = impl_->lookup_active(pid);
    if (impl_->active_devices(p) >= config_.max_devices)
        throw EnrollmentError(ErrorCode::DeviceLimitReached,
                              "at most " + std::to_string(config_.max_devices) + " devices per participant");
    std::optional<std::string> private_key;
    if (public_key && !public_key->empty()) {
        if (!is_valid_public_key(*public_key))
            throw EnrollmentError(ErrorCode::InvalidPublicKey, "expected a base64 Curve25519 public key");
    } else {
        auto kp = generate_keypair();
        public_key = kp.public_key;
        private_key = std::move(kp.private_key);
    }
    const Instant now = clock_();
    auto ip = impl_->allocate(config_, now);
    if (!ip) throw EnrollmentError(ErrorCode::AddressPoolExhausted, "no free address in the pool");

    json ev{{"type", "register"},
            {"participant", p.id},
            {"device_ip", ip->to_string()},
            {"public_key", *public_key},
            {"at", Impl::ts(now)}};
    impl_->append(ev);
    impl_->apply(ev, config_);

    Registration r;
    r.device = impl_->active.at(*ip);
    r.peer_config = render_peer_config(config_, server_public_key_, *ip, private_key);
    r.qr_payload = r.peer_config;
    return r;
}

Pid Registry::regenerate_pid(const Pid& old_pid) {
    std::lock_guard lock(mu_);
    auto& p = impl_->lookup_active(old_pid);
    Pid fresh;
    do fresh = Pid::random();
    while (impl_->by_pid.contains(fresh));
    json ev{{"type", "regenerate"}, {"participant", p.id}, {"pid", fresh.str()}, {"at", Impl::ts(clock_())}};
    impl_->append(ev);
    impl_->apply(ev, config_);
    return fresh;
}

Participant Registry::withdraw(const Pid& pid) {
    std::lock_guard lock(mu_);
    auto& p = impl_->lookup(pid);
    if (p.status == ParticipantStatus::Active) {
        json ev{{"type", "withdraw"}, {"participant", p.id}, {"at", Impl::ts(clock_())}};
        impl_->append(ev);
        impl_->apply(ev, config_);
    }
    return p;
}

Millis Registry::heartbeat(Ipv4Address device, bool connected, std::optional<Instant> at) {
    std::lock_guard lock(mu_);
    auto it = impl_->active.find(device);
    if (it == impl_->active.end())
        throw EnrollmentError(ErrorCode::UnknownDevice, "no active registration for " + device.to_string());
    const Instant when = at.value_or(clock_());
    if (it->second.last_heartbeat && when < *it->second.last_heartbeat)
        throw EnrollmentError(ErrorCode::StaleHeartbeat, "heartbeat precedes the last one recorded");
    json ev{{"type", "heartbeat"}, {"device_ip", device.to_string()}, {"connected", connected}, {"at", Impl::ts(when)}};
    impl_->append(ev);
    impl_->apply(ev, config_);
    return it->second.cumulative_connected;
}

DeviceStatus Registry::device_status(Ipv4Address device, std::optional<Instant> now) const {
    std::lock_guard lock(mu_);
    auto it = impl_->active.find(device);
    if (it == impl_->active.end())
        throw EnrollmentError(ErrorCode::UnknownDevice, "no active registration for " + device.to_string());
    return impl_->status_of(it->second, config_, now.value_or(clock_()));
}

Participant Registry::participant(const Pid& pid) const {
    std::lock_guard lock(mu_);
    return impl_->lookup(pid);
}

std::vector<DeviceStatus> Registry::participant_devices(const Pid& pid, std::optional<Instant> now) const {
    std::lock_guard lock(mu_);
    const auto& p = impl_->lookup(pid);
    const Instant t = now.value_or(clock_());
    std::vector<DeviceStatus> out;
    for (auto ip : p.devices) {
        auto it = impl_->active.find(ip);
        if (it != impl_->active.end() && it->second.participant == p.id)
            out.push_back(impl_->status_of(it->second, config_, t));
    }
    return out;
}

std::vector<Reminder> Registry::reminder_scan(std::optional<Instant> now) const {
    std::lock_guard lock(mu_);
    const Instant t = now.value_or(clock_());
    std::vector<Reminder> out;
    for (const auto& [ip, d] : impl_->active) {
        if (impl_->participants.at(d.participant).status != ParticipantStatus::Active) continue;
        auto age = t - d.last_heartbeat.value_or(d.created_at);
        if (age > config_.staleness_window) out.push_back({ip, d.last_heartbeat, age});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Reminder& a, const Reminder& b) { return a.stale_for > b.stale_for; });
    return out;
}

std::size_t Registry::participant_count() const {
    std::lock_guard lock(mu_);
    return impl_->participants.size();
}

}  // namespace aitrace::enrollment
