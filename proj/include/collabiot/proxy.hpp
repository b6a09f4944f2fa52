#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "collabiot/net.hpp"
#include "collabiot/token.hpp"

// Per-device enforcement point: verifies and caches tokens, applies
// token-bucket rate limits, max-use counters and context overrides, and
// dispatches admitted requests to the device adapter through a scheduler.

namespace collabiot::proxy {

using model::Json;

// --- token bucket -------------------------------------------------------------

struct TokenBucket {
    double rate_per_s = 1.0;
    std::uint32_t burst = 1;
    double level = 0.0;     // fractional tokens, in [0, burst]
    double last_refill = 0; // seconds

    static TokenBucket full(double rate_per_s, std::uint32_t burst, double now_s);

    void refill(double now_s);
    bool try_admit(double now_s); // refill, then take one token if available
    void refund();                // undo one admission (queue-full backpressure)
};

// --- adapters -----------------------------------------------------------------

// Translation layer from the hardware-independent API to the emulated device.
// execute() is the only path to the device.
class DeviceAdapter {
public:
    virtual ~DeviceAdapter() = default;

    virtual std::string device_type() const = 0;
    virtual std::vector<std::string> methods() const = 0;
    // Capability that guards a method; nullopt when the method is not part of
    // this device type's API surface.
    virtual std::optional<model::CapabilityName> capability_of(const std::string& method) const = 0;
    virtual Json execute(const std::string& method, const Json& args) = 0;
    // Methods whose result is delivered as chunked frames (camera live_stream).
    virtual bool is_streaming(const std::string& method) const { return (void)method, false; }
    virtual int parallelism() const { return 1; }

    std::set<model::CapabilityName> capability_surface() const;
};

struct AdapterConfig {
    std::string kind;              // bulb | lock | camera | inference
    double service_time_ms = 0.0;  // main operation latency
    double status_time_ms = 0.0;   // get_status latency
    double actuation_delay_ms = 0; // lock actuation
    std::size_t frame_bytes = 4096;
    int parallelism = 1;

    static AdapterConfig from_json(const Json& j);
};

std::shared_ptr<DeviceAdapter> make_adapter(const AdapterConfig& config);

// --- scheduling ---------------------------------------------------------------

struct SchedulerPolicy {
    enum class Mode { none, fcfs, priority_fcfs };
    Mode mode = Mode::fcfs;
    std::size_t capacity = 1024;

    static SchedulerPolicy from_json(const Json& j);
};

SchedulerPolicy::Mode scheduler_mode_from_string(const std::string& name);

struct DispatchJob {
    int priority = 10;
    std::uint64_t seq = 0; // FCFS tie-break within equal priority
    std::function<void()> run;
};

// Serialized priority queue feeding the adapter workers. Lower priority
// number dequeues first; equal priorities dequeue in arrival order.
class DispatchQueue {
public:
    explicit DispatchQueue(SchedulerPolicy policy);

    bool push(int priority, std::function<void()> run); // false when full
    std::optional<DispatchJob> pop();                   // blocks; nullopt on shutdown
    void shutdown();
    std::size_t depth() const;

private:
    struct Cmp {
        bool operator()(const DispatchJob& a, const DispatchJob& b) const {
            if (a.priority != b.priority) return a.priority < b.priority;
            return a.seq < b.seq;
        }
    };
    SchedulerPolicy policy_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::multiset<DispatchJob, Cmp> queue_;
    std::uint64_t next_seq_ = 0;
    bool down_ = false;
};

// --- sessions and decisions ----------------------------------------------------

// Limiter state for one capability of one session. A context override lays a
// second, stricter bucket over the policy bucket; admission must pass both.
// The override bucket starts clamped to the policy bucket's current level, and
// deactivation simply drops it, so an untouched limiter returns to exactly its
// pre-override state.
struct CapabilityLimiter {
    std::optional<model::Limit> policy_limit;
    std::optional<TokenBucket> policy_bucket; // rate kind
    std::uint64_t remaining_uses = 0;         // max-uses kind
    std::optional<TokenBucket> override_bucket;

    bool try_admit(double now_s);
    void refund();
    void apply_override(double rate_per_s, double now_s);
    void clear_override();
};

struct Session {
    std::string jti;
    token::TokenClaims claims;
    double admitted_at = 0;
    std::map<model::CapabilityName, CapabilityLimiter> limiters;
    std::mutex mutex; // serializes limiter read-modify-write
};

struct Decision {
    bool admitted = false;
    std::string reason; // capability | limit | expired | queue_full | unknown_session
};

struct RequestEnvelope {
    std::string jti;
    std::string capability; // optional consistency claim; may be empty
    std::string method;
    Json args;
    int priority = 10;
    std::string request_id;
};

// --- proxy core (transport-free) ------------------------------------------------

struct ProxyStats {
    std::vector<double> admission_us; // authorize_and_admit latency samples
    std::uint64_t admitted = 0;
    std::uint64_t denied = 0;
};

class ProxyCore {
public:
    ProxyCore(std::string device_id, std::shared_ptr<DeviceAdapter> adapter,
              std::array<unsigned char, 32> issuer_public_key, std::int64_t clock_skew_s = 30);

    // Invalid-list check, token verification, audience check; on success the
    // session is cached under its jti with freshly filled buckets.
    std::shared_ptr<Session> establish(const std::string& token, double now_s);

    std::shared_ptr<Session> find_session(const std::string& jti) const;

    Decision authorize_and_admit(Session& session, const RequestEnvelope& req, double now_s);
    void refund(Session& session, const RequestEnvelope& req); // queue-full backpressure

    // Returns evicted session count; unknown jtis are recorded for later.
    std::size_t apply_invalidation(const token::InvalidationNotice& notice, double now_s);

    // Context-aware rate control. Throws Errc::unknown_capability when an
    // override names a capability outside the adapter surface.
    void update_context_rate(const std::string& context_name, bool active,
                             const std::map<std::string, double>& rate_overrides, double now_s);

    const std::string& device_id() const { return device_id_; }
    DeviceAdapter& adapter() { return *adapter_; }
    std::shared_ptr<DeviceAdapter> adapter_ptr() { return adapter_; }
    const std::array<unsigned char, 32>& issuer_public_key() const { return issuer_key_; }

    ProxyStats stats_snapshot() const;
    std::size_t session_count() const;
    std::size_t invalid_list_size() const;

private:
    void rebuild_overrides(double now_s); // recompute effective override per capability

    std::string device_id_;
    std::shared_ptr<DeviceAdapter> adapter_;
    std::array<unsigned char, 32> issuer_key_;
    std::int64_t clock_skew_s_;

    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_; // by jti

    mutable std::mutex invalid_mutex_;
    std::map<std::string, std::int64_t> invalid_jtis_; // jti -> exp (pruned past exp + skew)

    mutable std::mutex context_mutex_;
    std::map<std::string, std::map<model::CapabilityName, double>> active_contexts_;

    mutable std::mutex stats_mutex_;
    ProxyStats stats_;
};

// --- proxy server (framed RPC endpoint + dispatch workers) ----------------------

struct ProxyServerConfig {
    std::string bind_address = "127.0.0.1:0";
    std::string device_id;
    AdapterConfig adapter;
    std::string issuer_public_key_b64;
    std::int64_t clock_skew_s = 30;
    SchedulerPolicy scheduler;
    net::TlsConfig tls;
};

class ProxyServer {
public:
    explicit ProxyServer(ProxyServerConfig config);
    ~ProxyServer();

    void start();
    void stop();
    std::string address() const;
    ProxyCore& core() { return *core_; }

private:
    void handle_connection(std::shared_ptr<net::Connection> conn);
    void handle_request(const std::shared_ptr<net::Connection>& conn, const Json& msg,
                        double now_s);

    ProxyServerConfig config_;
    std::shared_ptr<ProxyCore> core_;
    std::unique_ptr<DispatchQueue> queue_;
    std::vector<std::thread> workers_;
    std::unique_ptr<net::Server> server_;
};

double wallclock_s(); // epoch seconds with sub-second resolution

} // namespace collabiot::proxy
