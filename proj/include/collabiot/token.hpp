#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "collabiot/engine.hpp"
#include "collabiot/model.hpp"

// Capability tokens: compact JWT serialization (three base64url segments, no
// padding) signed with Ed25519 under alg "EdDSA". Also the issuance ledger
// and invalidation notices the auto-configuration engine broadcasts.

namespace collabiot::token {

using model::Json;

// --- base64url (no padding, canonical) -------------------------------------

std::string base64url_encode(const unsigned char* data, std::size_t len);
std::string base64url_encode(const std::string& data);
// Strict: rejects padding, non-alphabet characters and non-zero trailing bits,
// so no two distinct encodings decode to the same bytes.
std::string base64url_decode(const std::string& text);

// --- keys -------------------------------------------------------------------

struct Ed25519KeyPair {
    std::array<unsigned char, 32> public_key{};
    std::array<unsigned char, 64> secret_key{};

    static Ed25519KeyPair generate();
    static Ed25519KeyPair from_seed(const std::array<unsigned char, 32>& seed);

    // PEM-like key file holding the base64 seed.
    static Ed25519KeyPair load(const std::string& path);
    void save(const std::string& path) const;
    static Ed25519KeyPair load_or_create(const std::string& path);

    std::string public_key_b64() const;
};

std::array<unsigned char, 32> public_key_from_b64(const std::string& b64);

std::string sign_detached_b64(const std::string& bytes, const Ed25519KeyPair& key);
bool verify_detached_b64(const std::string& bytes, const std::string& signature_b64,
                         const std::array<unsigned char, 32>& public_key);

// --- claims -----------------------------------------------------------------

struct TokenClaims {
    std::string iss;
    std::string sub; // guest device id
    std::string aud; // native device id
    std::int64_t iat = 0;
    std::int64_t nbf = 0;
    std::int64_t exp = 0;
    std::vector<model::CapabilityEntry> inc_cap; // sorted by capability name
    std::string jti;

    void validate() const; // iat <= nbf <= exp, inc_cap non-empty, jti present

    Json to_json() const;
    static TokenClaims from_json(const Json& j);

    bool operator==(const TokenClaims&) const = default;
};

std::string fresh_jti();

// Compact JWT: base64url(header).base64url(claims).base64url(signature).
std::string sign_token(const TokenClaims& claims, const Ed25519KeyPair& key);

// Returns the claims iff the signature verifies under `public_key` and
// nbf - skew <= now <= exp + skew. Throws Errc::malformed_token,
// Errc::bad_signature, Errc::expired or Errc::not_yet_valid.
TokenClaims verify_token(const std::string& compact,
                         const std::array<unsigned char, 32>& public_key,
                         std::int64_t now_s, std::int64_t clock_skew_s);

// Claims without signature or time checks (guest-side convenience).
TokenClaims decode_claims_unverified(const std::string& compact);

// --- ledger and invalidation -------------------------------------------------

struct InvalidationEntry {
    std::string jti;
    std::int64_t exp = 0; // lets proxies prune the invalid list

    bool operator==(const InvalidationEntry&) const = default;
};

struct InvalidationNotice {
    std::vector<InvalidationEntry> entries;
    std::uint64_t revision = 0;  // store revision that caused the notice
    std::int64_t issued_at = 0;

    Json to_json() const;
    static InvalidationNotice from_json(const Json& j);
    std::string canonical_bytes() const; // stable serialization for signing
};

// Live tokens by (sub, aud); never holds a jti past exp + skew.
class TokenLedger {
public:
    void record(const TokenClaims& claims);
    std::vector<InvalidationEntry> live(const std::string& sub, const std::string& aud) const;
    std::vector<std::string> live_jtis() const;
    void prune(std::int64_t now_s, std::int64_t clock_skew_s);
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::pair<std::string, std::string>, std::vector<InvalidationEntry>> entries_;
};

// --- the auto-configuration engine's token side ------------------------------

struct JoinEntry {
    std::string token;
    std::string proxy_address;
    std::string device_type; // guest-facing hint; empty when the device has no type attribute
    TokenClaims claims;
};

struct AddressedNotice {
    std::string native_id;
    std::string proxy_address;
    InvalidationNotice notice;
    std::string signature_b64;
};

class TokenService {
public:
    TokenService(Ed25519KeyPair key, std::string issuer, std::int64_t clock_skew_s = 30);

    // One signed token per access grant of the guest; claims mirror the grant.
    std::vector<JoinEntry> on_device_join(const engine::DeviceRecord& guest,
                                          const engine::PolicyStore& store, std::int64_t now_s);

    // Names every live token whose (sub, aud) pair was invalidated, one signed
    // notice per native device. Ledger entries for those tokens are dropped.
    std::vector<AddressedNotice> issue_invalidation(
        const std::set<std::pair<std::string, std::string>>& invalidated,
        const engine::PolicyStore& store, std::uint64_t revision, std::int64_t now_s);

    const std::array<unsigned char, 32>& public_key() const { return key_.public_key; }
    std::string public_key_b64() const { return key_.public_key_b64(); }
    std::int64_t clock_skew() const { return clock_skew_s_; }
    const std::string& issuer() const { return issuer_; }
    TokenLedger& ledger() { return ledger_; }

    std::string sign_payload(const std::string& bytes) const;

private:
    Ed25519KeyPair key_;
    std::string issuer_;
    std::int64_t clock_skew_s_;
    TokenLedger ledger_;
};

} // namespace collabiot::token
