#include "collabiot/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

#include <nlohmann/json.hpp>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/ssl.h>
#include <openssl/x509.h>

namespace collabiot::net {

namespace {

constexpr std::uint32_t kMaxFrameBytes = 64u * 1024u * 1024u;

[[noreturn]] void fail_io(const std::string& what) {
    throw Error(Errc::io, what + ": " + std::strerror(errno));
}

std::string openssl_error(const std::string& what) {
    char buf[256] = {};
    ERR_error_string_n(ERR_get_error(), buf, sizeof(buf));
    return what + ": " + buf;
}

SSL_CTX* make_server_ctx(const TlsConfig& tls) {
    SSL_CTX* ctx = SSL_CTX_new(TLS_server_method());
    if (ctx == nullptr) throw Error(Errc::io, openssl_error("SSL_CTX_new"));
    if (SSL_CTX_use_certificate_file(ctx, tls.cert_file.c_str(), SSL_FILETYPE_PEM) != 1 ||
        SSL_CTX_use_PrivateKey_file(ctx, tls.key_file.c_str(), SSL_FILETYPE_PEM) != 1) {
        SSL_CTX_free(ctx);
        throw Error(Errc::io, openssl_error("loading TLS certificate/key"));
    }
    return ctx;
}

SSL_CTX* make_client_ctx(const TlsConfig& tls) {
    SSL_CTX* ctx = SSL_CTX_new(TLS_client_method());
    if (ctx == nullptr) throw Error(Errc::io, openssl_error("SSL_CTX_new"));
    if (!tls.ca_file.empty()) {
        if (SSL_CTX_load_verify_locations(ctx, tls.ca_file.c_str(), nullptr) != 1) {
            SSL_CTX_free(ctx);
            throw Error(Errc::io, openssl_error("loading TLS trust anchor"));
        }
        SSL_CTX_set_verify(ctx, SSL_VERIFY_PEER, nullptr);
    } else {
        SSL_CTX_set_verify(ctx, SSL_VERIFY_NONE, nullptr);
    }
    return ctx;
}

} // namespace

// Blocking byte stream over a socket, optionally wrapped in a TLS session.
class Stream {
public:
    Stream(int fd, SSL* ssl, SSL_CTX* owned_ctx) : fd_(fd), ssl_(ssl), owned_ctx_(owned_ctx) {}

    ~Stream() { close(); }

    void close() {
        if (ssl_ != nullptr) {
            SSL_shutdown(ssl_);
            SSL_free(ssl_);
            ssl_ = nullptr;
        }
        if (fd_ >= 0) {
            ::shutdown(fd_, SHUT_RDWR);
            ::close(fd_);
            fd_ = -1;
        }
        if (owned_ctx_ != nullptr) {
            SSL_CTX_free(owned_ctx_);
            owned_ctx_ = nullptr;
        }
    }

    void shutdown_only() {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }

    void write_all(const char* data, std::size_t len) {
        while (len > 0) {
            ssize_t n = ssl_ != nullptr ? SSL_write(ssl_, data, static_cast<int>(len))
                                        : ::send(fd_, data, len, MSG_NOSIGNAL);
            if (n <= 0) throw Error(Errc::io, "connection write failed");
            data += n;
            len -= static_cast<std::size_t>(n);
        }
    }

    // False on clean EOF before any byte; throws on mid-message EOF.
    bool read_all(char* data, std::size_t len) {
        bool any = false;
        while (len > 0) {
            ssize_t n = ssl_ != nullptr ? SSL_read(ssl_, data, static_cast<int>(len))
                                        : ::recv(fd_, data, len, 0);
            if (n <= 0) {
                if (!any) return false;
                throw Error(Errc::io, "connection closed mid-frame");
            }
            any = true;
            data += n;
            len -= static_cast<std::size_t>(n);
        }
        return true;
    }

private:
    int fd_;
    SSL* ssl_;
    SSL_CTX* owned_ctx_;
};

Connection::Connection(std::unique_ptr<Stream> stream) : stream_(std::move(stream)) {}
Connection::~Connection() = default;

void Connection::send(const Json& message) {
    const std::string payload = message.dump();
    if (payload.size() > kMaxFrameBytes) throw Error(Errc::io, "frame exceeds size limit");
    char header[4];
    const auto len = static_cast<std::uint32_t>(payload.size());
    header[0] = static_cast<char>((len >> 24) & 0xff);
    header[1] = static_cast<char>((len >> 16) & 0xff);
    header[2] = static_cast<char>((len >> 8) & 0xff);
    header[3] = static_cast<char>(len & 0xff);
    std::lock_guard lock(write_mutex_);
    stream_->write_all(header, 4);
    stream_->write_all(payload.data(), payload.size());
}

std::optional<Json> Connection::receive() {
    char header[4];
    if (!stream_->read_all(header, 4)) return std::nullopt;
    const std::uint32_t len = (static_cast<std::uint32_t>(static_cast<unsigned char>(header[0])) << 24) |
                              (static_cast<std::uint32_t>(static_cast<unsigned char>(header[1])) << 16) |
                              (static_cast<std::uint32_t>(static_cast<unsigned char>(header[2])) << 8) |
                              static_cast<std::uint32_t>(static_cast<unsigned char>(header[3]));
    if (len > kMaxFrameBytes) throw Error(Errc::io, "incoming frame exceeds size limit");
    std::string payload(len, '\0');
    if (len > 0 && !stream_->read_all(payload.data(), len)) {
        throw Error(Errc::io, "connection closed mid-frame");
    }
    try {
        return Json::parse(payload);
    } catch (const Json::exception& e) {
        throw Error(Errc::io, std::string("frame is not valid JSON: ") + e.what());
    }
}

void Connection::close() { stream_->shutdown_only(); }

Json Connection::call(const Json& message) {
    send(message);
    auto reply = receive();
    if (!reply) throw Error(Errc::io, "connection closed before reply");
    return *reply;
}

std::pair<std::string, std::uint16_t> split_host_port(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos) throw Error(Errc::schema, "address '" + address + "' is not host:port");
    const std::string host = address.substr(0, colon);
    const int port = std::stoi(address.substr(colon + 1));
    if (port < 0 || port > 65535) throw Error(Errc::schema, "bad port in '" + address + "'");
    return {host, static_cast<std::uint16_t>(port)};
}

std::unique_ptr<Connection> dial(const std::string& address, const TlsConfig& tls, int timeout_ms) {
    const auto [host, port] = split_host_port(address);

    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* result = nullptr;
    if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &result) != 0 ||
        result == nullptr) {
        throw Error(Errc::io, "cannot resolve " + address);
    }
    int fd = ::socket(result->ai_family, result->ai_socktype, result->ai_protocol);
    if (fd < 0) {
        freeaddrinfo(result);
        fail_io("socket");
    }
    timeval tv{timeout_ms / 1000, (timeout_ms % 1000) * 1000};
    setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    if (::connect(fd, result->ai_addr, result->ai_addrlen) != 0) {
        freeaddrinfo(result);
        ::close(fd);
        throw Error(Errc::io, "cannot connect to " + address + ": " + std::strerror(errno));
    }
    freeaddrinfo(result);

    if (!tls.enabled) {
        return std::make_unique<Connection>(std::make_unique<Stream>(fd, nullptr, nullptr));
    }
    SSL_CTX* ctx = make_client_ctx(tls);
    SSL* ssl = SSL_new(ctx);
    SSL_set_fd(ssl, fd);
    if (SSL_connect(ssl) != 1) {
        SSL_free(ssl);
        SSL_CTX_free(ctx);
        ::close(fd);
        throw Error(Errc::io, openssl_error("TLS handshake with " + address));
    }
    return std::make_unique<Connection>(std::make_unique<Stream>(fd, ssl, ctx));
}

Server::Server(const std::string& bind_address, Handler handler, TlsConfig tls)
    : bind_address_(bind_address), handler_(std::move(handler)), tls_(std::move(tls)) {}

Server::~Server() { stop(); }

void Server::start() {
    const auto [host, port] = split_host_port(bind_address_);
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) fail_io("socket");
    int one = 1;
    setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (host.empty() || host == "0.0.0.0") {
        addr.sin_addr.s_addr = INADDR_ANY;
    } else if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        throw Error(Errc::io, "cannot parse bind host '" + host + "'");
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        fail_io("bind " + bind_address_);
    }
    if (::listen(listen_fd_, 128) != 0) fail_io("listen");

    sockaddr_in bound{};
    socklen_t blen = sizeof(bound);
    getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &blen);
    char ip[INET_ADDRSTRLEN] = {};
    inet_ntop(AF_INET, &bound.sin_addr, ip, sizeof(ip));
    bound_address_ = std::string(ip) + ":" + std::to_string(ntohs(bound.sin_port));

    if (tls_.enabled) ssl_ctx_ = make_server_ctx(tls_);

    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
}

void Server::accept_loop() {
    while (running_) {
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (running_) continue;
            break;
        }
        int one = 1;
        setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));

        std::shared_ptr<Connection> conn;
        try {
            if (ssl_ctx_ != nullptr) {
                SSL* ssl = SSL_new(static_cast<SSL_CTX*>(ssl_ctx_));
                SSL_set_fd(ssl, fd);
                if (SSL_accept(ssl) != 1) {
                    SSL_free(ssl);
                    ::close(fd);
                    continue;
                }
                conn = std::make_shared<Connection>(std::make_unique<Stream>(fd, ssl, nullptr));
            } else {
                conn = std::make_shared<Connection>(std::make_unique<Stream>(fd, nullptr, nullptr));
            }
        } catch (const Error&) {
            ::close(fd);
            continue;
        }

        std::lock_guard lock(conn_mutex_);
        live_conns_.push_back(conn);
        conn_threads_.emplace_back([this, conn] {
            try {
                handler_(conn);
            } catch (const Error&) {
                // connection-scoped failure; peer sees the close
            } catch (const std::exception&) {
            }
            conn->close();
        });
    }
}

void Server::stop() {
    if (!running_.exchange(false)) return;
    if (listen_fd_ >= 0) {
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    std::vector<std::thread> threads;
    {
        std::lock_guard lock(conn_mutex_);
        for (auto& weak : live_conns_) {
            if (auto conn = weak.lock()) conn->close();
        }
        live_conns_.clear();
        threads.swap(conn_threads_);
    }
    for (auto& t : threads) {
        if (t.joinable()) t.join();
    }
    if (ssl_ctx_ != nullptr) {
        SSL_CTX_free(static_cast<SSL_CTX*>(ssl_ctx_));
        ssl_ctx_ = nullptr;
    }
}

std::string Server::bound_address() const { return bound_address_; }

void make_self_signed_cert(const std::string& cert_path, const std::string& key_path,
                           const std::string& common_name) {
    EVP_PKEY* pkey = EVP_PKEY_Q_keygen(nullptr, nullptr, "EC", "P-256");
    if (pkey == nullptr) throw Error(Errc::crypto, openssl_error("EC key generation"));

    X509* cert = X509_new();
    ASN1_INTEGER_set(X509_get_serialNumber(cert), 1);
    X509_gmtime_adj(X509_getm_notBefore(cert), -3600);
    X509_gmtime_adj(X509_getm_notAfter(cert), 10L * 365 * 24 * 3600);
    X509_set_pubkey(cert, pkey);
    X509_NAME* name = X509_get_subject_name(cert);
    X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_ASC,
                               reinterpret_cast<const unsigned char*>(common_name.c_str()), -1, -1, 0);
    X509_set_issuer_name(cert, name);
    if (X509_sign(cert, pkey, EVP_sha256()) == 0) {
        X509_free(cert);
        EVP_PKEY_free(pkey);
        throw Error(Errc::crypto, openssl_error("certificate signing"));
    }

    FILE* kf = std::fopen(key_path.c_str(), "w");
    FILE* cf = std::fopen(cert_path.c_str(), "w");
    if (kf == nullptr || cf == nullptr) {
        if (kf) std::fclose(kf);
        if (cf) std::fclose(cf);
        X509_free(cert);
        EVP_PKEY_free(pkey);
        throw Error(Errc::io, "cannot write certificate files");
    }
    PEM_write_PrivateKey(kf, pkey, nullptr, nullptr, 0, nullptr, nullptr);
    PEM_write_X509(cf, cert);
    std::fclose(kf);
    std::fclose(cf);
    X509_free(cert);
    EVP_PKEY_free(pkey);
}

} // namespace collabiot::net
