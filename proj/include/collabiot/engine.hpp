#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "collabiot/model.hpp"

// Policy engine: the device/policy store, attribute-to-group matching,
// guest-to-grant resolution and invalidation diffing on mutation.

namespace collabiot::engine {

using model::Json;

enum class DeviceKind { native, guest };

struct DeviceRecord {
    std::string id;
    DeviceKind kind = DeviceKind::guest;
    model::AttributeMap attributes;
    std::set<model::CapabilityName> capabilities;
    std::string address; // host:port of the device's proxy; required for natives

    // Throws Errc::schema on empty id, native without address, or a
    // capability whose device-type prefix contradicts the `type` attribute.
    void validate() const;

    Json to_json() const;
    static DeviceRecord from_json(const Json& j);

    bool operator==(const DeviceRecord&) const = default;
};

// Resolved permissions of one guest on one native device.
struct AccessGrant {
    std::string guest;
    std::string native;
    std::map<model::CapabilityName, std::optional<model::Limit>> capabilities;
    std::int64_t expires_at = 0; // epoch seconds

    bool operator==(const AccessGrant&) const = default;
};

struct PolicyStore {
    std::map<std::string, model::GroupSpec> groups;
    std::map<std::string, model::AccessPolicy> policies;
    std::map<std::string, DeviceRecord> devices;
    std::uint64_t revision = 0;
    std::int64_t default_ttl_s = 86400; // applied when a policy has no ttl

    void add_document(const model::PolicyDocument& doc); // bulk insert, no diffing
};

// True iff the attributes satisfy every constraint of the group: the
// attribute must be present, inside the includes (when given) and outside
// the excludes (when given). Missing attribute means no match.
bool matches_group(const model::AttributeMap& attributes, const model::GroupSpec& group);

std::set<std::string> match_groups(const DeviceRecord& device, const PolicyStore& store);

// Union-merges every policy whose destination group the guest matches over
// every native device matching the policy's source group. Include-policies
// contribute their listed capabilities verbatim; exclude-policies contribute
// the device's capabilities minus the excluded names. Limit collisions keep
// the most permissive limit; expiry is now + the smallest contributing ttl.
// Output is sorted by native device id.
std::vector<AccessGrant> resolve_access(const DeviceRecord& guest, const PolicyStore& store,
                                        std::int64_t now_s);

struct Mutation {
    enum class Op {
        add_group, remove_group,
        add_policy, remove_policy,
        add_device, update_device, remove_device,
    };
    Op op;
    std::optional<model::GroupSpec> group;
    std::optional<model::AccessPolicy> policy;
    std::optional<DeviceRecord> device;
    std::string name; // target for the remove ops

    static Mutation AddGroup(model::GroupSpec g);
    static Mutation RemoveGroup(std::string name);
    static Mutation AddPolicy(model::AccessPolicy p);
    static Mutation RemovePolicy(std::string name);
    static Mutation AddDevice(DeviceRecord d);
    static Mutation UpdateDevice(DeviceRecord d);
    static Mutation RemoveDevice(std::string id);

    Json to_json() const;
    static Mutation from_json(const Json& j);
};

std::string_view mutation_op_name(Mutation::Op op);

struct ChangeResult {
    std::uint64_t revision = 0;
    // (guest id, native id) pairs whose resolved grant shrank or disappeared.
    std::set<std::pair<std::string, std::string>> invalidated;
};

// True when `after` covers everything `before` granted at least as
// permissively (every capability kept, no limit downgraded, expiry not
// shortened). Grants failing this need their tokens invalidated.
bool grant_covers(const AccessGrant& before, const AccessGrant& after);

// Applies the mutation in place, bumping the revision. Invalidated pairs are
// computed by diffing resolve_access for every known guest before and after.
// Throws Errc::conflict on undefined group references or duplicate names and
// Errc::not_found when removing/updating something absent.
ChangeResult apply_change(PolicyStore& store, const Mutation& mutation, std::int64_t now_s);

struct Conflict {
    enum class Severity { error, warning };
    enum class Kind {
        duplicate_name,
        dangling_reference,
        unknown_capability,
        unknown_attribute_name,
        unknown_attribute_value,
    };
    Severity severity;
    Kind kind;
    std::string detail;
};

std::string_view conflict_kind_name(Conflict::Kind kind);

// Conflicts are data, not failures: duplicate names and dangling references
// are errors; attribute values no registered device carries are warnings.
std::vector<Conflict> detect_conflicts(const model::GroupSpec& candidate, const PolicyStore& store,
                                       const model::AttributeRegistry& registry = {});
std::vector<Conflict> detect_conflicts(const model::AccessPolicy& candidate, const PolicyStore& store);

// Full-store snapshot: the policy document schema plus a devices section and
// the revision counter.
std::string store_to_yaml(const PolicyStore& store);
PolicyStore store_from_yaml(const std::string& text);

// Single-writer, multi-reader store. Readers get immutable snapshots; apply()
// serializes mutations and optionally journals them to disk with periodic
// YAML snapshots (snapshot.yaml + journal.jsonl under the store directory).
class SharedStore {
public:
    SharedStore();
    explicit SharedStore(PolicyStore initial);

    // Loads snapshot + journal from `dir`, creating it when missing.
    static std::unique_ptr<SharedStore> open(const std::filesystem::path& dir,
                                             std::uint64_t snapshot_every = 100);

    std::shared_ptr<const PolicyStore> snapshot() const;
    ChangeResult apply(const Mutation& mutation, std::int64_t now_s);
    void set_default_ttl(std::int64_t ttl_s);

private:
    void persist(const Mutation& mutation, std::uint64_t revision, std::int64_t now_s);

    mutable std::mutex mutex_;
    std::shared_ptr<const PolicyStore> current_;
    std::filesystem::path dir_; // empty for in-memory stores
    std::ofstream journal_;
    std::uint64_t snapshot_every_ = 100;
    std::uint64_t since_snapshot_ = 0;
};

} // namespace collabiot::engine
