#include "collabiot/token.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>

#include <nlohmann/json.hpp>
#include <sodium.h>

namespace collabiot::token {

namespace {

void ensure_sodium() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw Error(Errc::crypto, "libsodium initialization failed");
    });
}

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";

const std::array<int, 256>& reverse_table() {
    static const std::array<int, 256> table = [] {
        std::array<int, 256> t{};
        t.fill(-1);
        for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(kAlphabet[i])] = i;
        return t;
    }();
    return table;
}

} // namespace

std::string base64url_encode(const unsigned char* data, std::size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 3 <= len) {
        unsigned v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
        out.push_back(kAlphabet[(v >> 6) & 63]);
        out.push_back(kAlphabet[v & 63]);
        i += 3;
    }
    const std::size_t rem = len - i;
    if (rem == 1) {
        unsigned v = data[i] << 16;
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
    } else if (rem == 2) {
        unsigned v = (data[i] << 16) | (data[i + 1] << 8);
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
        out.push_back(kAlphabet[(v >> 6) & 63]);
    }
    return out;
}

std::string base64url_encode(const std::string& data) {
    return base64url_encode(reinterpret_cast<const unsigned char*>(data.data()), data.size());
}

std::string base64url_decode(const std::string& text) {
    const auto& table = reverse_table();
    const std::size_t len = text.size();
    if (len % 4 == 1) throw Error(Errc::malformed_token, "base64url segment has impossible length");
    std::string out;
    out.reserve(len / 4 * 3 + 2);
    unsigned buffer = 0;
    int bits = 0;
    for (char c : text) {
        int v = table[static_cast<unsigned char>(c)];
        if (v < 0) throw Error(Errc::malformed_token, "invalid base64url character");
        buffer = (buffer << 6) | static_cast<unsigned>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<char>((buffer >> bits) & 0xff));
        }
    }
    // Canonical form: unused trailing bits must be zero.
    if (bits > 0 && (buffer & ((1u << bits) - 1)) != 0) {
        throw Error(Errc::malformed_token, "non-canonical base64url trailing bits");
    }
    return out;
}

Ed25519KeyPair Ed25519KeyPair::generate() {
    ensure_sodium();
    Ed25519KeyPair kp;
    crypto_sign_keypair(kp.public_key.data(), kp.secret_key.data());
    return kp;
}

Ed25519KeyPair Ed25519KeyPair::from_seed(const std::array<unsigned char, 32>& seed) {
    ensure_sodium();
    Ed25519KeyPair kp;
    crypto_sign_seed_keypair(kp.public_key.data(), kp.secret_key.data(), seed.data());
    return kp;
}

namespace {
constexpr const char* kKeyBegin = "-----BEGIN COLLABIOT ED25519 KEY-----";
constexpr const char* kKeyEnd = "-----END COLLABIOT ED25519 KEY-----";
} // namespace

Ed25519KeyPair Ed25519KeyPair::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io, "cannot read key file " + path);
    std::string line, b64;
    bool inside = false;
    while (std::getline(in, line)) {
        if (line == kKeyBegin) {
            inside = true;
        } else if (line == kKeyEnd) {
            inside = false;
        } else if (inside) {
            b64 += line;
        }
    }
    if (b64.empty()) throw Error(Errc::crypto, "key file " + path + " holds no key block");
    std::string raw;
    try {
        raw = base64url_decode(b64);
    } catch (const Error&) {
        throw Error(Errc::crypto, "key file " + path + " is not valid base64url");
    }
    if (raw.size() != 32) throw Error(Errc::crypto, "key file " + path + " does not hold a 32-byte seed");
    std::array<unsigned char, 32> seed{};
    std::copy(raw.begin(), raw.end(), seed.begin());
    return from_seed(seed);
}

void Ed25519KeyPair::save(const std::string& path) const {
    ensure_sodium();
    // The seed is the first half of the libsodium secret key.
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write key file " + path);
    out << kKeyBegin << "\n"
        << base64url_encode(secret_key.data(), 32) << "\n"
        << kKeyEnd << "\n";
}

Ed25519KeyPair Ed25519KeyPair::load_or_create(const std::string& path) {
    std::ifstream probe(path);
    if (probe.good()) return load(path);
    Ed25519KeyPair kp = generate();
    kp.save(path);
    return kp;
}

std::string Ed25519KeyPair::public_key_b64() const {
    return base64url_encode(public_key.data(), public_key.size());
}

std::array<unsigned char, 32> public_key_from_b64(const std::string& b64) {
    std::string raw = base64url_decode(b64);
    if (raw.size() != 32) throw Error(Errc::crypto, "public key must decode to 32 bytes");
    std::array<unsigned char, 32> key{};
    std::copy(raw.begin(), raw.end(), key.begin());
    return key;
}

std::string sign_detached_b64(const std::string& bytes, const Ed25519KeyPair& key) {
    ensure_sodium();
    std::array<unsigned char, crypto_sign_BYTES> sig{};
    if (crypto_sign_detached(sig.data(), nullptr,
                             reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(),
                             key.secret_key.data()) != 0) {
        throw Error(Errc::crypto, "signing failed");
    }
    return base64url_encode(sig.data(), sig.size());
}

bool verify_detached_b64(const std::string& bytes, const std::string& signature_b64,
                         const std::array<unsigned char, 32>& public_key) {
    ensure_sodium();
    std::string sig;
    try {
        sig = base64url_decode(signature_b64);
    } catch (const Error&) {
        return false;
    }
    if (sig.size() != crypto_sign_BYTES) return false;
    return crypto_sign_verify_detached(reinterpret_cast<const unsigned char*>(sig.data()),
                                       reinterpret_cast<const unsigned char*>(bytes.data()),
                                       bytes.size(), public_key.data()) == 0;
}

void TokenClaims::validate() const {
    if (iss.empty() || sub.empty() || aud.empty() || jti.empty())
        throw Error(Errc::malformed_token, "claims need iss, sub, aud and jti");
    if (!(iat <= nbf && nbf <= exp))
        throw Error(Errc::malformed_token, "claims need iat <= nbf <= exp");
    if (inc_cap.empty()) throw Error(Errc::malformed_token, "inc_cap must be non-empty");
}

Json TokenClaims::to_json() const {
    Json caps = Json::array();
    for (const auto& entry : inc_cap) {
        Json e{{"cap", entry.capability.value}};
        if (entry.limit) e["limit"] = model::limit_to_json(*entry.limit);
        caps.push_back(std::move(e));
    }
    return Json{{"iss", iss}, {"sub", sub},   {"aud", aud},
                {"iat", iat}, {"nbf", nbf},   {"exp", exp},
                {"jti", jti}, {"inc_cap", std::move(caps)}};
}

TokenClaims TokenClaims::from_json(const Json& j) {
    TokenClaims c;
    c.iss = j.at("iss").get<std::string>();
    c.sub = j.at("sub").get<std::string>();
    c.aud = j.at("aud").get<std::string>();
    c.iat = j.at("iat").get<std::int64_t>();
    c.nbf = j.at("nbf").get<std::int64_t>();
    c.exp = j.at("exp").get<std::int64_t>();
    c.jti = j.at("jti").get<std::string>();
    for (const auto& e : j.at("inc_cap")) {
        model::CapabilityEntry entry;
        entry.capability = model::CapabilityName::parse(e.at("cap").get<std::string>());
        if (e.contains("limit")) entry.limit = model::limit_from_json(e.at("limit"));
        c.inc_cap.push_back(std::move(entry));
    }
    c.validate();
    return c;
}

std::string fresh_jti() {
    ensure_sodium();
    std::array<unsigned char, 16> raw{};
    randombytes_buf(raw.data(), raw.size());
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(32);
    for (unsigned char b : raw) {
        out.push_back(hex[b >> 4]);
        out.push_back(hex[b & 15]);
    }
    return out;
}

std::string sign_token(const TokenClaims& claims, const Ed25519KeyPair& key) {
    ensure_sodium();
    claims.validate();
    static const std::string header_b64 =
        base64url_encode(Json{{"alg", "EdDSA"}, {"typ", "JWT"}}.dump());
    const std::string signing_input = header_b64 + "." + base64url_encode(claims.to_json().dump());

    std::array<unsigned char, crypto_sign_BYTES> sig{};
    if (crypto_sign_detached(sig.data(), nullptr,
                             reinterpret_cast<const unsigned char*>(signing_input.data()),
                             signing_input.size(), key.secret_key.data()) != 0) {
        throw Error(Errc::crypto, "token signing failed");
    }
    return signing_input + "." + base64url_encode(sig.data(), sig.size());
}

namespace {

struct Segments {
    std::string header_b64, claims_b64, sig_b64;
};

Segments split_token(const std::string& compact) {
    const auto first = compact.find('.');
    const auto second = compact.find('.', first + 1);
    if (first == std::string::npos || second == std::string::npos ||
        compact.find('.', second + 1) != std::string::npos) {
        throw Error(Errc::malformed_token, "token must have exactly three segments");
    }
    Segments s;
    s.header_b64 = compact.substr(0, first);
    s.claims_b64 = compact.substr(first + 1, second - first - 1);
    s.sig_b64 = compact.substr(second + 1);
    if (s.header_b64.empty() || s.claims_b64.empty() || s.sig_b64.empty())
        throw Error(Errc::malformed_token, "token has an empty segment");
    return s;
}

TokenClaims parse_claims(const std::string& raw) {
    Json j;
    try {
        j = Json::parse(raw);
    } catch (const Json::exception&) {
        throw Error(Errc::malformed_token, "claims segment is not valid JSON");
    }
    try {
        return TokenClaims::from_json(j);
    } catch (const Error& e) {
        if (e.code() == Errc::malformed_token) throw;
        throw Error(Errc::malformed_token, std::string("bad claims: ") + e.what());
    } catch (const Json::exception& e) {
        throw Error(Errc::malformed_token, std::string("bad claims: ") + e.what());
    }
}

} // namespace

TokenClaims verify_token(const std::string& compact,
                         const std::array<unsigned char, 32>& public_key, std::int64_t now_s,
                         std::int64_t clock_skew_s) {
    ensure_sodium();
    const Segments seg = split_token(compact);

    Json header;
    try {
        header = Json::parse(base64url_decode(seg.header_b64));
    } catch (const Json::exception&) {
        throw Error(Errc::malformed_token, "header segment is not valid JSON");
    }
    if (header.value("alg", "") != "EdDSA" || header.value("typ", "") != "JWT")
        throw Error(Errc::malformed_token, "unsupported token header");

    const std::string sig = base64url_decode(seg.sig_b64);
    if (sig.size() != crypto_sign_BYTES)
        throw Error(Errc::malformed_token, "signature segment has wrong length");
    const std::string signing_input = seg.header_b64 + "." + seg.claims_b64;
    if (crypto_sign_verify_detached(reinterpret_cast<const unsigned char*>(sig.data()),
                                    reinterpret_cast<const unsigned char*>(signing_input.data()),
                                    signing_input.size(), public_key.data()) != 0) {
        throw Error(Errc::bad_signature, "token signature does not verify");
    }

    TokenClaims claims = parse_claims(base64url_decode(seg.claims_b64));
    if (now_s < claims.nbf - clock_skew_s)
        throw Error(Errc::not_yet_valid, "token not valid yet");
    if (now_s > claims.exp + clock_skew_s)
        throw Error(Errc::expired, "token expired");
    return claims;
}

TokenClaims decode_claims_unverified(const std::string& compact) {
    const Segments seg = split_token(compact);
    return parse_claims(base64url_decode(seg.claims_b64));
}

Json InvalidationNotice::to_json() const {
    Json list = Json::array();
    for (const auto& e : entries) list.push_back(Json{{"jti", e.jti}, {"exp", e.exp}});
    return Json{{"entries", std::move(list)}, {"revision", revision}, {"issued_at", issued_at}};
}

InvalidationNotice InvalidationNotice::from_json(const Json& j) {
    InvalidationNotice n;
    for (const auto& e : j.at("entries")) {
        n.entries.push_back({e.at("jti").get<std::string>(), e.at("exp").get<std::int64_t>()});
    }
    n.revision = j.at("revision").get<std::uint64_t>();
    n.issued_at = j.at("issued_at").get<std::int64_t>();
    return n;
}

std::string InvalidationNotice::canonical_bytes() const {
    return to_json().dump(); // nlohmann orders keys, so dump() is stable
}

void TokenLedger::record(const TokenClaims& claims) {
    std::lock_guard lock(mutex_);
    entries_[{claims.sub, claims.aud}].push_back({claims.jti, claims.exp});
}

std::vector<InvalidationEntry> TokenLedger::live(const std::string& sub,
                                                 const std::string& aud) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find({sub, aud});
    return it == entries_.end() ? std::vector<InvalidationEntry>{} : it->second;
}

std::vector<std::string> TokenLedger::live_jtis() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [pair, list] : entries_) {
        for (const auto& e : list) out.push_back(e.jti);
    }
    return out;
}

void TokenLedger::prune(std::int64_t now_s, std::int64_t clock_skew_s) {
    std::lock_guard lock(mutex_);
    for (auto it = entries_.begin(); it != entries_.end();) {
        auto& list = it->second;
        std::erase_if(list, [&](const InvalidationEntry& e) { return e.exp + clock_skew_s < now_s; });
        it = list.empty() ? entries_.erase(it) : std::next(it);
    }
}

std::size_t TokenLedger::size() const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& [pair, list] : entries_) n += list.size();
    return n;
}

TokenService::TokenService(Ed25519KeyPair key, std::string issuer, std::int64_t clock_skew_s)
    : key_(std::move(key)), issuer_(std::move(issuer)), clock_skew_s_(clock_skew_s) {}

std::vector<JoinEntry> TokenService::on_device_join(const engine::DeviceRecord& guest,
                                                    const engine::PolicyStore& store,
                                                    std::int64_t now_s) {
    ledger_.prune(now_s, clock_skew_s_);
    std::vector<JoinEntry> out;
    for (const auto& grant : engine::resolve_access(guest, store, now_s)) {
        TokenClaims claims;
        claims.iss = issuer_;
        claims.sub = grant.guest;
        claims.aud = grant.native;
        claims.iat = now_s;
        claims.nbf = now_s;
        claims.exp = grant.expires_at;
        claims.jti = fresh_jti();
        for (const auto& [cap, limit] : grant.capabilities) claims.inc_cap.push_back({cap, limit});

        JoinEntry entry;
        entry.token = sign_token(claims, key_);
        const engine::DeviceRecord& native = store.devices.at(grant.native);
        entry.proxy_address = native.address;
        if (const std::string* type = native.attributes.find("type")) entry.device_type = *type;
        entry.claims = claims;
        ledger_.record(claims);
        out.push_back(std::move(entry));
    }
    return out;
}

std::vector<AddressedNotice> TokenService::issue_invalidation(
    const std::set<std::pair<std::string, std::string>>& invalidated,
    const engine::PolicyStore& store, std::uint64_t revision, std::int64_t now_s) {
    ledger_.prune(now_s, clock_skew_s_);
    std::map<std::string, InvalidationNotice> by_native;
    for (const auto& [sub, aud] : invalidated) {
        for (const auto& entry : ledger_.live(sub, aud)) {
            InvalidationNotice& n = by_native[aud];
            n.entries.push_back(entry);
            n.revision = revision;
            n.issued_at = now_s;
        }
    }
    std::vector<AddressedNotice> out;
    for (auto& [native_id, notice] : by_native) {
        AddressedNotice addressed;
        addressed.native_id = native_id;
        auto it = store.devices.find(native_id);
        if (it != store.devices.end()) addressed.proxy_address = it->second.address;
        addressed.signature_b64 = sign_detached_b64(notice.canonical_bytes(), key_);
        addressed.notice = std::move(notice);
        out.push_back(std::move(addressed));
    }
    return out;
}

std::string TokenService::sign_payload(const std::string& bytes) const {
    return sign_detached_b64(bytes, key_);
}

} // namespace collabiot::token
