#ifndef AITRACE_SERVICE_HPP
#define AITRACE_SERVICE_HPP

#include <memory>
#include <stdexcept>
#include <string>

#include "aitrace/enrollment.hpp"

namespace aitrace::enrollment {

class BindFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// HTTP/JSON front end for a Registry.
///
///   POST /enroll                          {"consent":true[,"pid":"..."]}
///   GET  /participants/{pid}              participant status and devices
///   POST /participants/{pid}/devices      {["public_key":"..."]}
///   POST /participants/{pid}/regenerate
///   POST /participants/{pid}/withdraw
///   POST /devices/{ip}/heartbeat          {"connected":true[,"at":"RFC 3339"]}
///   GET  /devices/{ip}/status[?now=...]
///   GET  /admin/reminders[?now=...]
///   GET  /health
///
/// `{pid}` may be the literal `me`, in which case the token is read from the
/// X-Participant-Pid header so clients can keep it out of URLs.
class Service {
public:
    explicit Service(Registry& registry);
    ~Service();

    /// Binds `host:port` (port 0 picks a free one) and returns the bound port.
    /// Throws BindFailure.
    int bind(const std::string& host, int port);
    /// Blocks serving requests until stop().
    void listen();
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// HTTP status used for each error code.
int http_status(ErrorCode code);

}  // namespace aitrace::enrollment

#endif  // AITRACE_SERVICE_HPP
