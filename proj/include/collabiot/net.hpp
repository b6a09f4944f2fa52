#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "collabiot/error.hpp"

// Framed RPC transport: 4-byte big-endian length prefix + UTF-8 JSON payload,
// over plain TCP or TLS. Protocol message shapes live with their owners
// (proxy.hpp, hub.hpp); this layer only moves frames.

namespace collabiot::net {

using Json = nlohmann::json;

struct TlsConfig {
    bool enabled = false;
    std::string cert_file; // server certificate (PEM)
    std::string key_file;  // server private key (PEM)
    std::string ca_file;   // client: trust anchor; empty skips verification
};

// Writes a PEM self-signed certificate + P-256 key pair for loopback use.
void make_self_signed_cert(const std::string& cert_path, const std::string& key_path,
                           const std::string& common_name);

class Stream; // opaque socket or TLS session

// One framed bidirectional connection. send() is safe from multiple threads;
// receive() must stay on a single reader thread.
class Connection {
public:
    explicit Connection(std::unique_ptr<Stream> stream);
    ~Connection();
    Connection(const Connection&) = delete;
    Connection& operator=(const Connection&) = delete;

    void send(const Json& message);
    std::optional<Json> receive(); // nullopt on clean peer close
    void close();

    // Blocking call helper: send and read the next frame.
    Json call(const Json& message);

private:
    std::unique_ptr<Stream> stream_;
    std::mutex write_mutex_;
};

std::unique_ptr<Connection> dial(const std::string& address, const TlsConfig& tls = {},
                                 int timeout_ms = 10000);

// Accept loop on its own thread, one handler thread per connection. The
// handler owns a share of the connection so queued work may outlive the
// reader loop and still answer.
class Server {
public:
    using Handler = std::function<void(std::shared_ptr<Connection>)>;

    Server(const std::string& bind_address, Handler handler, TlsConfig tls = {});
    ~Server();

    void start();
    void stop();
    std::string bound_address() const; // actual host:port after bind (port 0 supported)

private:
    void accept_loop();

    std::string bind_address_;
    Handler handler_;
    TlsConfig tls_;
    int listen_fd_ = -1;
    std::string bound_address_;
    std::atomic<bool> running_{false};
    std::thread accept_thread_;
    std::mutex conn_mutex_;
    std::vector<std::thread> conn_threads_;
    std::vector<std::weak_ptr<Connection>> live_conns_;
    void* ssl_ctx_ = nullptr; // SSL_CTX when TLS is enabled
};

std::pair<std::string, std::uint16_t> split_host_port(const std::string& address);

} // namespace collabiot::net
