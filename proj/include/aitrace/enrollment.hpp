#ifndef AITRACE_ENROLLMENT_HPP
#define AITRACE_ENROLLMENT_HPP

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aitrace/flow.hpp"
#include "aitrace/time.hpp"

namespace aitrace::enrollment {

enum class ErrorCode {
    ConsentRequired,
    UnknownPid,
    Withdrawn,
    DeviceLimitReached,
    UnknownDevice,
    StaleHeartbeat,
    PidTaken,
    InvalidPid,
    InvalidPublicKey,
    AddressPoolExhausted,
    StoreError,
};

std::string_view to_string(ErrorCode code);

class EnrollmentError : public std::runtime_error {
public:
    EnrollmentError(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

/// Opaque participant token. Carries no structure and is never paired with
/// identity data anywhere in the registry.
class Pid {
public:
    Pid() = default;
    explicit Pid(std::string token) : token_(std::move(token)) {}
    /// 128 random bits, RFC 4648 base32 without padding (26 characters).
    static Pid random();
    /// Participant-chosen tokens: 8..64 characters of [A-Za-z0-9_-].
    static bool well_formed(std::string_view token);

    const std::string& str() const { return token_; }
    friend auto operator<=>(const Pid&, const Pid&) = default;

private:
    std::string token_;
};

enum class ParticipantStatus { Active, Withdrawn };
std::string_view to_string(ParticipantStatus s);

struct Participant {
    std::uint64_t id = 0;  // internal, survives PID regeneration
    Pid pid;
    Instant consent_at{};
    ParticipantStatus status = ParticipantStatus::Active;
    std::vector<Ipv4Address> devices;  // registration order, including released ones
};

struct DeviceRegistration {
    Ipv4Address device_ip;
    std::uint64_t participant = 0;
    std::string public_key;  // base64 Curve25519
    Instant created_at{};
    std::optional<Instant> last_heartbeat;
    bool last_connected = false;
    Millis cumulative_connected{0};
    std::optional<Instant> released_at;  // set when the address returns to the pool

    bool active() const { return !released_at.has_value(); }
};

struct Registration {
    DeviceRegistration device;
    std::string peer_config;
    std::string qr_payload;  // identical to peer_config
};

struct DeviceStatus {
    DeviceRegistration device;
    ParticipantStatus participant_status = ParticipantStatus::Active;
    bool stale = false;
    Millis staleness{0};  // time since last heartbeat (or registration)
};

struct Reminder {
    Ipv4Address device_ip;
    std::optional<Instant> last_heartbeat;
    Millis stale_for{0};
};

struct EnrollmentConfig {
    Ipv4Address pool_first = *Ipv4Address::parse("10.7.0.2");
    Ipv4Address pool_last = *Ipv4Address::parse("10.7.255.254");
    std::size_t max_devices = 2;
    Millis staleness_window = std::chrono::hours(12);
    Millis address_quarantine = std::chrono::hours(72);
    bool revoke_on_regenerate = false;

    std::string server_public_key;  // generated and persisted when empty
    std::string endpoint = "vpn.example.edu:51820";
    std::string allowed_ips = "0.0.0.0/0, ::/0";
    std::string dns;
    int persistent_keepalive = 25;

    /// Throws std::invalid_argument.
    void check() const;
};

/// Curve25519 key pair in the base64 form WireGuard configs use.
struct KeyPair {
    std::string private_key;
    std::string public_key;
};

KeyPair generate_keypair();
bool is_valid_public_key(std::string_view base64);

/// Standard WireGuard peer configuration text. Without a private key the
/// Interface section carries a placeholder comment instead.
std::string render_peer_config(const EnrollmentConfig& config, const std::string& server_public_key,
                               Ipv4Address address, const std::optional<std::string>& private_key);

using Clock = std::function<Instant()>;
Clock system_clock();

/// PID lifecycle and device registry.
///
/// Every mutation is appended to a single-file JSON-lines event log before it
/// is applied; opening the same store replays the log. Private keys are never
/// written. All operations are serialized on one mutex.
class Registry {
public:
    explicit Registry(EnrollmentConfig config, std::optional<std::filesystem::path> store = std::nullopt,
                      Clock clock = system_clock());
    ~Registry();

    Registry(const Registry&) = delete;
    Registry& operator=(const Registry&) = delete;

    Participant enroll(bool consent, std::optional<std::string> chosen_pid = std::nullopt);

    /// `public_key` empty → the server generates a key pair and places the
    /// private half only in the returned config.
    Registration register_device(const Pid& pid, std::optional<std::string> public_key = std::nullopt);

    Pid regenerate_pid(const Pid& old_pid);
    Participant withdraw(const Pid& pid);

    /// Returns the updated cumulative connected time.
    Millis heartbeat(Ipv4Address device, bool connected, std::optional<Instant> at = std::nullopt);

    DeviceStatus device_status(Ipv4Address device, std::optional<Instant> now = std::nullopt) const;
    Participant participant(const Pid& pid) const;
    std::vector<DeviceStatus> participant_devices(const Pid& pid, std::optional<Instant> now = std::nullopt) const;

    /// Active devices whose last heartbeat is older than the staleness window,
    /// most stale first. No side effects.
    std::vector<Reminder> reminder_scan(std::optional<Instant> now = std::nullopt) const;

    const EnrollmentConfig& config() const { return config_; }
    const std::string& server_public_key() const { return server_public_key_; }
    std::size_t participant_count() const;

private:
    struct Impl;
    EnrollmentConfig config_;
    std::string server_public_key_;
    Clock clock_;
    mutable std::mutex mu_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace aitrace::enrollment

#endif  // AITRACE_ENROLLMENT_HPP
