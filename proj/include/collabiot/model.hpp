#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "collabiot/error.hpp"

// Policy language data model: attribute-based device groups and the
// capability policies linking them. Parsing normalizes attribute names and
// values to lowercase and enforces every structural invariant; anything that
// parses is safe to hand to the engine.

namespace collabiot::model {

using Json = nlohmann::json;

// Attribute map of a device or a constraint, e.g. {location: livingroom, type: lock}.
// Names and values are lowercase tokens; insertion normalizes case.
class AttributeMap {
public:
    AttributeMap() = default;

    // Normalizes to lowercase. Throws Errc::schema on empty name/value or duplicates.
    void set(std::string name, std::string value);

    const std::string* find(const std::string& name) const;
    bool has(const std::string& name) const { return find(name) != nullptr; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    const std::map<std::string, std::string>& entries() const { return entries_; }

    bool operator==(const AttributeMap&) const = default;

private:
    std::map<std::string, std::string> entries_;
};

// Capability name of the form "<device-type>_<action>", e.g. "lock_setconf".
struct CapabilityName {
    std::string value;

    // Lowercases and validates against [a-z0-9]+_[a-z0-9]+.
    static CapabilityName parse(std::string_view text, const std::string& path = {});

    std::string device_type() const; // text before the underscore

    auto operator<=>(const CapabilityName&) const = default;
};

// Per-capability limit: a token-bucket rate or a total use count.
struct Limit {
    enum class Kind { rate, max_uses };

    Kind kind = Kind::rate;
    double rate_per_s = 0.0; // kind == rate
    std::uint32_t burst = 0; // kind == rate
    std::uint64_t count = 0; // kind == max_uses

    static Limit rate(double per_s, std::uint32_t burst);
    static Limit max_uses(std::uint64_t count);

    // Accepts "10 req/sec", "60 req/min", "2 uses" and the mapping forms
    // {rate: ..., burst: ...} / {uses: ...}. Rates normalize to per-second;
    // burst defaults to ceil(rate), minimum 1.
    static Limit parse_scalar(const std::string& text, const std::string& path);

    // Scalar spelling when burst is the default, mapping form otherwise.
    std::string to_spec_string() const;
    bool burst_is_default() const;

    bool operator==(const Limit&) const = default;
};

// True when `a` admits at least as much traffic as `b`.
// Order: no-limit > rate (higher rate, then higher burst) > max-uses (higher count).
bool limit_at_least_as_permissive(const std::optional<Limit>& a, const std::optional<Limit>& b);

// One attribute constraint: device[attr] must be in `includes` (when present)
// and not in `excludes` (when present). Values within a list are ORed;
// constraints across attributes are ANDed.
struct AttributeConstraint {
    std::vector<std::string> includes;
    std::vector<std::string> excludes;

    bool operator==(const AttributeConstraint&) const = default;
};

struct GroupSpec {
    std::string name;
    std::map<std::string, AttributeConstraint> constraints;

    bool operator==(const GroupSpec&) const = default;
};

struct CapabilityEntry {
    CapabilityName capability;
    std::optional<Limit> limit;

    bool operator==(const CapabilityEntry&) const = default;
};

// Links a native (source) group to a guest (destination) group. Exactly one
// of includes/excludes is populated; excludes never carry limits.
struct AccessPolicy {
    std::string name;
    std::string source;
    std::string destination;
    std::vector<CapabilityEntry> includes;
    std::vector<CapabilityName> excludes;
    std::optional<std::int64_t> ttl_s; // token lifetime; hub default applies when absent

    bool is_include_policy() const { return !includes.empty(); }

    bool operator==(const AccessPolicy&) const = default;
};

struct PolicyDocument {
    std::vector<GroupSpec> groups;
    std::vector<AccessPolicy> policies;

    bool operator==(const PolicyDocument&) const = default;
};

// Attribute names the validation pipeline treats as known. Parsing warns on
// others; the pipeline's attribute stage rejects them.
struct AttributeRegistry {
    std::vector<std::string> known_names = default_names();

    static std::vector<std::string> default_names();
    bool knows(const std::string& name) const;
};

struct ParseWarning {
    std::string path;
    std::string message;
};

// Parses the YAML policy document (Fig. 5 schema: groups/name/spec/attributes/
// includes/excludes/policies/source/destination/capability/limit, plus ttl).
// Throws Error{Errc::syntax} on malformed YAML and Error{Errc::schema} with a
// document path on any schema violation. JSON documents parse too (JSON is a
// YAML subset), which is how LLM structured output enters the model.
PolicyDocument parse_policy_document(const std::string& text,
                                     std::vector<ParseWarning>* warnings = nullptr,
                                     const AttributeRegistry& registry = {});

// Canonical YAML rendering; parse(serialize(m)) == m and key order is fixed.
std::string serialize_policy_document(const PolicyDocument& doc);

std::string serialize_group(const GroupSpec& group);
std::string serialize_policy(const AccessPolicy& policy);

// JSON forms used by the journal, the C API and token claims.
Json group_to_json(const GroupSpec& group);
GroupSpec group_from_json(const Json& j);
Json policy_to_json(const AccessPolicy& policy);
AccessPolicy policy_from_json(const Json& j);
Json limit_to_json(const Limit& limit);
Limit limit_from_json(const Json& j);
Json attributes_to_json(const AttributeMap& attrs);
AttributeMap attributes_from_json(const Json& j);

} // namespace collabiot::model
