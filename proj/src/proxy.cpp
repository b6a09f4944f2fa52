#include "collabiot/proxy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>

namespace collabiot::proxy {

double wallclock_s() {
    using namespace std::chrono;
    return duration<double>(system_clock::now().time_since_epoch()).count();
}

TokenBucket TokenBucket::full(double rate_per_s, std::uint32_t burst, double now_s) {
    TokenBucket b;
    b.rate_per_s = rate_per_s;
    b.burst = burst;
    b.level = static_cast<double>(burst); // buckets start full at establishment
    b.last_refill = now_s;
    return b;
}

void TokenBucket::refill(double now_s) {
    if (now_s <= last_refill) return;
    level = std::min(static_cast<double>(burst), level + rate_per_s * (now_s - last_refill));
    last_refill = now_s;
}

bool TokenBucket::try_admit(double now_s) {
    refill(now_s);
    if (level < 1.0) return false;
    level -= 1.0;
    return true;
}

void TokenBucket::refund() {
    level = std::min(static_cast<double>(burst), level + 1.0);
}

namespace {

std::uint32_t default_burst(double rate_per_s) {
    double b = std::ceil(rate_per_s);
    return static_cast<std::uint32_t>(b < 1.0 ? 1.0 : b);
}

} // namespace

bool CapabilityLimiter::try_admit(double now_s) {
    if (policy_limit && policy_limit->kind == model::Limit::Kind::max_uses) {
        if (override_bucket) {
            if (!override_bucket->try_admit(now_s)) return false;
            if (remaining_uses == 0) {
                override_bucket->refund();
                return false;
            }
            --remaining_uses;
            return true;
        }
        if (remaining_uses == 0) return false;
        --remaining_uses;
        return true;
    }
    if (policy_bucket && !policy_bucket->try_admit(now_s)) return false;
    if (override_bucket && !override_bucket->try_admit(now_s)) {
        if (policy_bucket) policy_bucket->refund();
        return false;
    }
    return true;
}

void CapabilityLimiter::refund() {
    if (policy_limit && policy_limit->kind == model::Limit::Kind::max_uses) {
        ++remaining_uses;
        if (override_bucket) override_bucket->refund();
        return;
    }
    if (policy_bucket) policy_bucket->refund();
    if (override_bucket) override_bucket->refund();
}

void CapabilityLimiter::apply_override(double rate_per_s, double now_s) {
    const std::uint32_t burst = default_burst(rate_per_s);
    double start_level = static_cast<double>(burst);
    if (policy_bucket) {
        policy_bucket->refill(now_s);
        start_level = std::min(start_level, policy_bucket->level);
    }
    TokenBucket b;
    b.rate_per_s = rate_per_s;
    b.burst = burst;
    b.level = start_level; // clamped: no fresh burst just because a context flipped
    b.last_refill = now_s;
    override_bucket = b;
}

void CapabilityLimiter::clear_override() { override_bucket.reset(); }

std::set<model::CapabilityName> DeviceAdapter::capability_surface() const {
    std::set<model::CapabilityName> out;
    for (const auto& m : methods()) {
        if (auto cap = capability_of(m)) out.insert(*cap);
    }
    return out;
}

SchedulerPolicy::Mode scheduler_mode_from_string(const std::string& name) {
    if (name == "none") return SchedulerPolicy::Mode::none;
    if (name == "fcfs") return SchedulerPolicy::Mode::fcfs;
    if (name == "priority-fcfs" || name == "priority_fcfs") return SchedulerPolicy::Mode::priority_fcfs;
    throw Error(Errc::schema, "unknown scheduler mode '" + name + "'");
}

SchedulerPolicy SchedulerPolicy::from_json(const Json& j) {
    SchedulerPolicy p;
    if (j.contains("mode")) p.mode = scheduler_mode_from_string(j.at("mode").get<std::string>());
    p.capacity = j.value("queue_capacity", p.capacity);
    if (p.capacity < 1) throw Error(Errc::schema, "queue capacity must be >= 1");
    return p;
}

DispatchQueue::DispatchQueue(SchedulerPolicy policy) : policy_(policy) {}

bool DispatchQueue::push(int priority, std::function<void()> run) {
    std::lock_guard lock(mutex_);
    if (down_ || queue_.size() >= policy_.capacity) return false;
    DispatchJob job;
    // FCFS mode ignores the priority field entirely.
    job.priority = policy_.mode == SchedulerPolicy::Mode::priority_fcfs ? priority : 0;
    job.seq = next_seq_++;
    job.run = std::move(run);
    queue_.insert(std::move(job));
    cv_.notify_one();
    return true;
}

std::optional<DispatchJob> DispatchQueue::pop() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return down_ || !queue_.empty(); });
    if (queue_.empty()) return std::nullopt;
    auto it = queue_.begin(); // lowest (priority, seq)
    DispatchJob job = std::move(queue_.extract(it).value());
    return job;
}

void DispatchQueue::shutdown() {
    std::lock_guard lock(mutex_);
    down_ = true;
    cv_.notify_all();
}

std::size_t DispatchQueue::depth() const {
    std::lock_guard lock(mutex_);
    return queue_.size();
}

ProxyCore::ProxyCore(std::string device_id, std::shared_ptr<DeviceAdapter> adapter,
                     std::array<unsigned char, 32> issuer_public_key, std::int64_t clock_skew_s)
    : device_id_(std::move(device_id)),
      adapter_(std::move(adapter)),
      issuer_key_(issuer_public_key),
      clock_skew_s_(clock_skew_s) {}

std::shared_ptr<Session> ProxyCore::establish(const std::string& token, double now_s) {
    const auto now = static_cast<std::int64_t>(std::floor(now_s));

    // Invalid list first, then signature/time, then audience.
    const token::TokenClaims peek = token::decode_claims_unverified(token);
    {
        std::lock_guard lock(invalid_mutex_);
        if (invalid_jtis_.contains(peek.jti)) {
            throw Error(Errc::invalidated, "token '" + peek.jti + "' has been invalidated");
        }
    }
    token::TokenClaims claims = token::verify_token(token, issuer_key_, now, clock_skew_s_);
    if (claims.aud != device_id_) {
        throw Error(Errc::wrong_audience,
                    "token audience '" + claims.aud + "' is not this device ('" + device_id_ + "')");
    }

    auto session = std::make_shared<Session>();
    session->jti = claims.jti;
    session->admitted_at = now_s;
    for (const auto& entry : claims.inc_cap) {
        CapabilityLimiter limiter;
        limiter.policy_limit = entry.limit;
        if (entry.limit) {
            if (entry.limit->kind == model::Limit::Kind::rate) {
                limiter.policy_bucket =
                    TokenBucket::full(entry.limit->rate_per_s, entry.limit->burst, now_s);
            } else {
                limiter.remaining_uses = entry.limit->count;
            }
        }
        session->limiters.emplace(entry.capability, std::move(limiter));
    }
    session->claims = std::move(claims);

    {
        std::lock_guard ctx_lock(context_mutex_);
        std::unique_lock lock(sessions_mutex_);
        sessions_[session->jti] = session;
        // Bring the fresh session under any already-active context override.
        for (auto& [cap, limiter] : session->limiters) {
            double strictest = 0;
            bool found = false;
            for (const auto& [name, overrides] : active_contexts_) {
                auto it = overrides.find(cap);
                if (it != overrides.end() && (!found || it->second < strictest)) {
                    strictest = it->second;
                    found = true;
                }
            }
            if (found) limiter.apply_override(strictest, now_s);
        }
    }
    return session;
}

std::shared_ptr<Session> ProxyCore::find_session(const std::string& jti) const {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(jti);
    return it == sessions_.end() ? nullptr : it->second;
}

Decision ProxyCore::authorize_and_admit(Session& session, const RequestEnvelope& req, double now_s) {
    const auto started = std::chrono::steady_clock::now();
    Decision decision;

    const auto finish = [&](Decision d) {
        const double us = std::chrono::duration<double, std::micro>(
                              std::chrono::steady_clock::now() - started)
                              .count();
        std::lock_guard lock(stats_mutex_);
        if (stats_.admission_us.size() < 200000) stats_.admission_us.push_back(us);
        if (d.admitted) ++stats_.admitted;
        else ++stats_.denied;
        return d;
    };

    // Session expiry mid-stream evicts the cached session.
    if (now_s > static_cast<double>(session.claims.exp + clock_skew_s_)) {
        {
            std::unique_lock lock(sessions_mutex_);
            sessions_.erase(session.jti);
        }
        return finish({false, "expired"});
    }

    const auto mapped = adapter_->capability_of(req.method);
    if (!mapped) return finish({false, "capability"});
    if (!req.capability.empty() && req.capability != mapped->value) {
        return finish({false, "capability"});
    }
    auto it = session.limiters.find(*mapped);
    if (it == session.limiters.end()) return finish({false, "capability"});

    std::lock_guard lock(session.mutex);
    if (!it->second.try_admit(now_s)) return finish({false, "limit"});
    return finish({true, ""});
}

void ProxyCore::refund(Session& session, const RequestEnvelope& req) {
    const auto mapped = adapter_->capability_of(req.method);
    if (!mapped) return;
    auto it = session.limiters.find(*mapped);
    if (it == session.limiters.end()) return;
    std::lock_guard lock(session.mutex);
    it->second.refund();
}

std::size_t ProxyCore::apply_invalidation(const token::InvalidationNotice& notice, double now_s) {
    const auto now = static_cast<std::int64_t>(std::floor(now_s));
    {
        std::lock_guard lock(invalid_mutex_);
        for (const auto& entry : notice.entries) {
            invalid_jtis_[entry.jti] = entry.exp; // unknown jtis recorded too
        }
        std::erase_if(invalid_jtis_,
                      [&](const auto& kv) { return kv.second + clock_skew_s_ < now; });
    }
    std::size_t evicted = 0;
    std::unique_lock lock(sessions_mutex_);
    for (const auto& entry : notice.entries) {
        evicted += sessions_.erase(entry.jti);
    }
    return evicted;
}

void ProxyCore::update_context_rate(const std::string& context_name, bool active,
                                    const std::map<std::string, double>& rate_overrides,
                                    double now_s) {
    const auto surface = adapter_->capability_surface();
    std::map<model::CapabilityName, double> parsed;
    for (const auto& [name, rate] : rate_overrides) {
        const auto cap = model::CapabilityName::parse(name);
        if (!surface.contains(cap)) {
            throw Error(Errc::unknown_capability,
                        "override names capability '" + cap.value + "' outside this device");
        }
        if (rate <= 0) throw Error(Errc::schema, "override rate must be positive");
        parsed.emplace(cap, rate);
    }

    std::lock_guard ctx_lock(context_mutex_);
    if (active) {
        active_contexts_[context_name] = std::move(parsed);
    } else {
        active_contexts_.erase(context_name);
    }
    rebuild_overrides(now_s);
}

void ProxyCore::rebuild_overrides(double now_s) {
    // context_mutex_ held by caller.
    std::map<model::CapabilityName, double> effective;
    for (const auto& [name, overrides] : active_contexts_) {
        for (const auto& [cap, rate] : overrides) {
            auto [it, fresh] = effective.emplace(cap, rate);
            if (!fresh) it->second = std::min(it->second, rate); // strictest wins
        }
    }
    std::shared_lock lock(sessions_mutex_);
    for (auto& [jti, session] : sessions_) {
        std::lock_guard slock(session->mutex);
        for (auto& [cap, limiter] : session->limiters) {
            auto it = effective.find(cap);
            if (it != effective.end()) {
                limiter.apply_override(it->second, now_s);
            } else {
                limiter.clear_override();
            }
        }
    }
}

ProxyStats ProxyCore::stats_snapshot() const {
    std::lock_guard lock(stats_mutex_);
    return stats_;
}

std::size_t ProxyCore::session_count() const {
    std::shared_lock lock(sessions_mutex_);
    return sessions_.size();
}

std::size_t ProxyCore::invalid_list_size() const {
    std::lock_guard lock(invalid_mutex_);
    return invalid_jtis_.size();
}

ProxyServer::ProxyServer(ProxyServerConfig config) : config_(std::move(config)) {
    core_ = std::make_shared<ProxyCore>(config_.device_id, make_adapter(config_.adapter),
                                        token::public_key_from_b64(config_.issuer_public_key_b64),
                                        config_.clock_skew_s);
    queue_ = std::make_unique<DispatchQueue>(config_.scheduler);
}

ProxyServer::~ProxyServer() { stop(); }

void ProxyServer::start() {
    server_ = std::make_unique<net::Server>(
        config_.bind_address,
        [this](std::shared_ptr<net::Connection> conn) { handle_connection(std::move(conn)); },
        config_.tls);
    server_->start();

    if (config_.scheduler.mode != SchedulerPolicy::Mode::none) {
        const int workers = std::max(1, core_->adapter().parallelism());
        for (int i = 0; i < workers; ++i) {
            workers_.emplace_back([this] {
                while (auto job = queue_->pop()) job->run();
            });
        }
    }
}

void ProxyServer::stop() {
    if (queue_) queue_->shutdown();
    for (auto& w : workers_) {
        if (w.joinable()) w.join();
    }
    workers_.clear();
    if (server_) {
        server_->stop();
        server_.reset();
    }
}

std::string ProxyServer::address() const { return server_ ? server_->bound_address() : ""; }

void ProxyServer::handle_connection(std::shared_ptr<net::Connection> conn) {
    while (auto msg = conn->receive()) {
        const double now_s = wallclock_s();
        try {
            handle_request(conn, *msg, now_s);
        } catch (const Error& e) {
            Json reply{{"status", "error"}, {"reason", std::string(errc_name(e.code()))},
                       {"detail", e.what()}};
            if (msg->contains("request_id")) reply["request_id"] = msg->at("request_id");
            conn->send(reply);
        }
    }
}

void ProxyServer::handle_request(const std::shared_ptr<net::Connection>& conn, const Json& msg,
                                 double now_s) {
    const std::string kind = msg.value("kind", "");

    if (kind == "establish") {
        auto session = core_->establish(msg.at("token").get<std::string>(), now_s);
        Json reply{{"status", "ok"},
                   {"result", Json{{"jti", session->jti}, {"exp", session->claims.exp}}}};
        if (msg.contains("request_id")) reply["request_id"] = msg.at("request_id");
        conn->send(reply);
        return;
    }

    if (kind == "request") {
        RequestEnvelope req;
        req.jti = msg.value("jti", "");
        req.capability = msg.value("capability", "");
        req.method = msg.value("method", "");
        req.args = msg.contains("args") ? msg.at("args") : Json::object();
        req.priority = msg.value("priority", 10);
        req.request_id = msg.value("request_id", "");

        auto session = core_->find_session(req.jti);
        if (!session) {
            conn->send(Json{{"request_id", req.request_id}, {"status", "deny"},
                            {"reason", "unknown_session"}});
            return;
        }
        Decision decision = core_->authorize_and_admit(*session, req, now_s);
        if (!decision.admitted) {
            conn->send(Json{{"request_id", req.request_id}, {"status", "deny"},
                            {"reason", decision.reason}});
            return;
        }

        auto work = [this, conn, session, req] {
            Json reply;
            reply["request_id"] = req.request_id;
            try {
                Json result = core_->adapter().execute(req.method, req.args);
                if (core_->adapter().is_streaming(req.method) && result.contains("chunks")) {
                    const auto& chunks = result.at("chunks");
                    for (std::size_t i = 0; i < chunks.size(); ++i) {
                        conn->send(Json{{"request_id", req.request_id},
                                        {"status", "ok"},
                                        {"result", Json{{"frame_index", i},
                                                        {"data", chunks.at(i)},
                                                        {"final", i + 1 == chunks.size()}}}});
                    }
                    return;
                }
                reply["status"] = "ok";
                reply["result"] = std::move(result);
            } catch (const std::exception& e) {
                reply["status"] = "error";
                reply["reason"] = "adapter";
                reply["detail"] = core_->adapter().device_type() + "." + req.method + ": " + e.what();
            }
            try {
                conn->send(reply);
            } catch (const Error&) {
                // peer went away before the response; nothing to do
            }
        };

        if (config_.scheduler.mode == SchedulerPolicy::Mode::none) {
            work();
            return;
        }
        if (!queue_->push(req.priority, std::move(work))) {
            core_->refund(*session, req); // backpressure must not consume the budget
            conn->send(Json{{"request_id", req.request_id}, {"status", "deny"},
                            {"reason", "queue_full"}});
        }
        return;
    }

    if (kind == "invalidate") {
        const Json& notice_json = msg.at("notice");
        const std::string signature = msg.at("issuer_signature").get<std::string>();
        token::InvalidationNotice notice = token::InvalidationNotice::from_json(notice_json);
        if (!token::verify_detached_b64(notice.canonical_bytes(), signature,
                                        core_->issuer_public_key())) {
            throw Error(Errc::unauthorized, "invalidation notice is not issuer-signed");
        }
        const std::size_t evicted = core_->apply_invalidation(notice, now_s);
        Json reply{{"status", "ok"}, {"result", Json{{"evicted", evicted}}}};
        if (msg.contains("request_id")) reply["request_id"] = msg.at("request_id");
        conn->send(reply);
        return;
    }

    if (kind == "context") {
        // Context signals ride the authenticated admin channel: issuer-signed.
        Json signed_part{{"signal", msg.at("signal")},
                         {"overrides", msg.contains("overrides") ? msg.at("overrides") : Json::object()}};
        const std::string signature = msg.at("issuer_signature").get<std::string>();
        if (!token::verify_detached_b64(signed_part.dump(), signature, core_->issuer_public_key())) {
            throw Error(Errc::unauthorized, "context signal is not issuer-signed");
        }
        std::map<std::string, double> overrides;
        if (msg.contains("overrides")) {
            for (const auto& [cap, rate] : msg.at("overrides").items()) {
                overrides[cap] = rate.get<double>();
            }
        }
        core_->update_context_rate(msg.at("signal").at("context_name").get<std::string>(),
                                   msg.at("signal").at("active").get<bool>(), overrides, now_s);
        Json reply{{"status", "ok"}, {"result", Json::object()}};
        if (msg.contains("request_id")) reply["request_id"] = msg.at("request_id");
        conn->send(reply);
        return;
    }

    throw Error(Errc::schema, "unknown message kind '" + kind + "'");
}

} // namespace collabiot::proxy
