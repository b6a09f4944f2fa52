#include "collabiot/engine.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

namespace collabiot::engine {

void DeviceRecord::validate() const {
    if (id.empty()) throw Error(Errc::schema, "device id must be non-empty");
    if (kind == DeviceKind::native && address.empty())
        throw Error(Errc::schema, "native device '" + id + "' needs a proxy address");
    if (const std::string* type = attributes.find("type")) {
        for (const auto& cap : capabilities) {
            if (cap.device_type() != *type) {
                throw Error(Errc::schema, "device '" + id + "': capability '" + cap.value +
                                              "' does not match type '" + *type + "'");
            }
        }
    }
}

Json DeviceRecord::to_json() const {
    Json caps = Json::array();
    for (const auto& c : capabilities) caps.push_back(c.value);
    Json out{{"id", id},
             {"kind", kind == DeviceKind::native ? "native" : "guest"},
             {"attributes", model::attributes_to_json(attributes)},
             {"capabilities", std::move(caps)}};
    if (!address.empty()) out["address"] = address;
    return out;
}

DeviceRecord DeviceRecord::from_json(const Json& j) {
    DeviceRecord d;
    d.id = j.at("id").get<std::string>();
    const std::string kind = j.value("kind", "guest");
    if (kind == "native") d.kind = DeviceKind::native;
    else if (kind == "guest") d.kind = DeviceKind::guest;
    else throw Error(Errc::schema, "device '" + d.id + "': unknown kind '" + kind + "'");
    if (j.contains("attributes")) d.attributes = model::attributes_from_json(j.at("attributes"));
    if (j.contains("capabilities")) {
        for (const auto& c : j.at("capabilities")) {
            d.capabilities.insert(model::CapabilityName::parse(c.get<std::string>()));
        }
    }
    d.address = j.value("address", "");
    d.validate();
    return d;
}

void PolicyStore::add_document(const model::PolicyDocument& doc) {
    for (const auto& g : doc.groups) {
        if (!groups.emplace(g.name, g).second)
            throw Error(Errc::conflict, "duplicate group '" + g.name + "'");
    }
    for (const auto& p : doc.policies) {
        if (!groups.contains(p.source))
            throw Error(Errc::conflict, "policy '" + p.name + "' references undefined group '" + p.source + "'");
        if (!groups.contains(p.destination))
            throw Error(Errc::conflict, "policy '" + p.name + "' references undefined group '" + p.destination + "'");
        if (!policies.emplace(p.name, p).second)
            throw Error(Errc::conflict, "duplicate policy '" + p.name + "'");
    }
    ++revision;
}

bool matches_group(const model::AttributeMap& attributes, const model::GroupSpec& group) {
    for (const auto& [attr, constraint] : group.constraints) {
        const std::string* value = attributes.find(attr);
        if (value == nullptr) return false; // constrained attribute absent: fail closed
        if (!constraint.includes.empty() &&
            std::find(constraint.includes.begin(), constraint.includes.end(), *value) ==
                constraint.includes.end()) {
            return false;
        }
        if (!constraint.excludes.empty() &&
            std::find(constraint.excludes.begin(), constraint.excludes.end(), *value) !=
                constraint.excludes.end()) {
            return false;
        }
    }
    return true;
}

std::set<std::string> match_groups(const DeviceRecord& device, const PolicyStore& store) {
    std::set<std::string> out;
    for (const auto& [name, group] : store.groups) {
        if (matches_group(device.attributes, group)) out.insert(name);
    }
    return out;
}

std::vector<AccessGrant> resolve_access(const DeviceRecord& guest, const PolicyStore& store,
                                        std::int64_t now_s) {
    const std::set<std::string> guest_groups = match_groups(guest, store);
    std::map<std::string, AccessGrant> grants;   // native id -> grant
    std::map<std::string, std::int64_t> min_ttl; // native id -> smallest contributing ttl

    for (const auto& [pname, policy] : store.policies) {
        if (!guest_groups.contains(policy.destination)) continue;
        const model::GroupSpec& source = store.groups.at(policy.source);
        const std::int64_t ttl = policy.ttl_s.value_or(store.default_ttl_s);

        for (const auto& [id, device] : store.devices) {
            if (device.kind != DeviceKind::native) continue;
            if (!matches_group(device.attributes, source)) continue;

            std::vector<model::CapabilityEntry> contributed;
            if (policy.is_include_policy()) {
                contributed = policy.includes;
            } else {
                for (const auto& cap : device.capabilities) {
                    if (std::find(policy.excludes.begin(), policy.excludes.end(), cap) ==
                        policy.excludes.end()) {
                        contributed.push_back({cap, std::nullopt});
                    }
                }
            }
            if (contributed.empty()) continue;

            AccessGrant& grant = grants[id];
            grant.guest = guest.id;
            grant.native = id;
            for (const auto& entry : contributed) {
                auto it = grant.capabilities.find(entry.capability);
                if (it == grant.capabilities.end()) {
                    grant.capabilities.emplace(entry.capability, entry.limit);
                } else if (!model::limit_at_least_as_permissive(it->second, entry.limit)) {
                    it->second = entry.limit; // most permissive contribution wins
                }
            }
            auto [tit, fresh] = min_ttl.emplace(id, ttl);
            if (!fresh) tit->second = std::min(tit->second, ttl);
        }
    }

    std::vector<AccessGrant> out;
    out.reserve(grants.size());
    for (auto& [id, grant] : grants) {
        grant.expires_at = now_s + min_ttl.at(id);
        out.push_back(std::move(grant));
    }
    return out;
}

Mutation Mutation::AddGroup(model::GroupSpec g) {
    Mutation m{Op::add_group};
    m.group = std::move(g);
    return m;
}
Mutation Mutation::RemoveGroup(std::string name) {
    Mutation m{Op::remove_group};
    m.name = std::move(name);
    return m;
}
Mutation Mutation::AddPolicy(model::AccessPolicy p) {
    Mutation m{Op::add_policy};
    m.policy = std::move(p);
    return m;
}
Mutation Mutation::RemovePolicy(std::string name) {
    Mutation m{Op::remove_policy};
    m.name = std::move(name);
    return m;
}
Mutation Mutation::AddDevice(DeviceRecord d) {
    Mutation m{Op::add_device};
    m.device = std::move(d);
    return m;
}
Mutation Mutation::UpdateDevice(DeviceRecord d) {
    Mutation m{Op::update_device};
    m.device = std::move(d);
    return m;
}
Mutation Mutation::RemoveDevice(std::string id) {
    Mutation m{Op::remove_device};
    m.name = std::move(id);
    return m;
}

std::string_view mutation_op_name(Mutation::Op op) {
    switch (op) {
        case Mutation::Op::add_group: return "add_group";
        case Mutation::Op::remove_group: return "remove_group";
        case Mutation::Op::add_policy: return "add_policy";
        case Mutation::Op::remove_policy: return "remove_policy";
        case Mutation::Op::add_device: return "add_device";
        case Mutation::Op::update_device: return "update_device";
        case Mutation::Op::remove_device: return "remove_device";
    }
    return "unknown";
}

Json Mutation::to_json() const {
    Json payload = Json::object();
    if (group) payload["group"] = model::group_to_json(*group);
    if (policy) payload["policy"] = model::policy_to_json(*policy);
    if (device) payload["device"] = device->to_json();
    if (!name.empty()) payload["name"] = name;
    return Json{{"op", std::string(mutation_op_name(op))}, {"payload", std::move(payload)}};
}

Mutation Mutation::from_json(const Json& j) {
    const std::string op = j.at("op").get<std::string>();
    const Json& payload = j.at("payload");
    if (op == "add_group") return AddGroup(model::group_from_json(payload.at("group")));
    if (op == "remove_group") return RemoveGroup(payload.at("name").get<std::string>());
    if (op == "add_policy") return AddPolicy(model::policy_from_json(payload.at("policy")));
    if (op == "remove_policy") return RemovePolicy(payload.at("name").get<std::string>());
    if (op == "add_device") return AddDevice(DeviceRecord::from_json(payload.at("device")));
    if (op == "update_device") return UpdateDevice(DeviceRecord::from_json(payload.at("device")));
    if (op == "remove_device") return RemoveDevice(payload.at("name").get<std::string>());
    throw Error(Errc::schema, "unknown mutation op '" + op + "'");
}

bool grant_covers(const AccessGrant& before, const AccessGrant& after) {
    if (after.expires_at < before.expires_at) return false;
    for (const auto& [cap, limit] : before.capabilities) {
        auto it = after.capabilities.find(cap);
        if (it == after.capabilities.end()) return false;
        if (!model::limit_at_least_as_permissive(it->second, limit)) return false;
    }
    return true;
}

namespace {

void apply_raw(PolicyStore& store, const Mutation& m) {
    switch (m.op) {
        case Mutation::Op::add_group: {
            const auto& g = m.group.value();
            if (store.groups.contains(g.name))
                throw Error(Errc::conflict, "duplicate group '" + g.name + "'");
            store.groups.emplace(g.name, g);
            return;
        }
        case Mutation::Op::remove_group: {
            auto it = store.groups.find(m.name);
            if (it == store.groups.end())
                throw Error(Errc::not_found, "unknown group '" + m.name + "'");
            for (const auto& [pname, p] : store.policies) {
                if (p.source == m.name || p.destination == m.name) {
                    throw Error(Errc::conflict, "group '" + m.name + "' is referenced by policy '" + pname + "'");
                }
            }
            store.groups.erase(it);
            return;
        }
        case Mutation::Op::add_policy: {
            const auto& p = m.policy.value();
            if (store.policies.contains(p.name))
                throw Error(Errc::conflict, "duplicate policy '" + p.name + "'");
            if (!store.groups.contains(p.source))
                throw Error(Errc::conflict, "policy '" + p.name + "' references undefined group '" + p.source + "'");
            if (!store.groups.contains(p.destination))
                throw Error(Errc::conflict, "policy '" + p.name + "' references undefined group '" + p.destination + "'");
            store.policies.emplace(p.name, p);
            return;
        }
        case Mutation::Op::remove_policy: {
            if (store.policies.erase(m.name) == 0)
                throw Error(Errc::not_found, "unknown policy '" + m.name + "'");
            return;
        }
        case Mutation::Op::add_device: {
            const auto& d = m.device.value();
            d.validate();
            if (store.devices.contains(d.id))
                throw Error(Errc::conflict, "duplicate device '" + d.id + "'");
            store.devices.emplace(d.id, d);
            return;
        }
        case Mutation::Op::update_device: {
            const auto& d = m.device.value();
            d.validate();
            auto it = store.devices.find(d.id);
            if (it == store.devices.end())
                throw Error(Errc::not_found, "unknown device '" + d.id + "'");
            it->second = d;
            return;
        }
        case Mutation::Op::remove_device: {
            if (store.devices.erase(m.name) == 0)
                throw Error(Errc::not_found, "unknown device '" + m.name + "'");
            return;
        }
    }
}

std::map<std::pair<std::string, std::string>, AccessGrant>
all_grants(const PolicyStore& store, std::int64_t now_s) {
    std::map<std::pair<std::string, std::string>, AccessGrant> out;
    for (const auto& [id, device] : store.devices) {
        if (device.kind != DeviceKind::guest) continue;
        for (auto& grant : resolve_access(device, store, now_s)) {
            out.emplace(std::make_pair(grant.guest, grant.native), std::move(grant));
        }
    }
    return out;
}

} // namespace

ChangeResult apply_change(PolicyStore& store, const Mutation& mutation, std::int64_t now_s) {
    const auto before = all_grants(store, now_s);
    apply_raw(store, mutation);
    store.revision += 1;
    const auto after = all_grants(store, now_s);

    ChangeResult result;
    result.revision = store.revision;
    for (const auto& [pair, grant] : before) {
        auto it = after.find(pair);
        if (it == after.end() || !grant_covers(grant, it->second)) {
            result.invalidated.insert(pair);
        }
    }
    return result;
}

std::vector<Conflict> detect_conflicts(const model::GroupSpec& candidate, const PolicyStore& store,
                                       const model::AttributeRegistry& registry) {
    std::vector<Conflict> out;
    if (store.groups.contains(candidate.name)) {
        out.push_back({Conflict::Severity::error, Conflict::Kind::duplicate_name,
                       "group '" + candidate.name + "' already exists"});
    }
    for (const auto& [attr, constraint] : candidate.constraints) {
        if (!registry.knows(attr)) {
            out.push_back({Conflict::Severity::error, Conflict::Kind::unknown_attribute_name,
                           "attribute '" + attr + "' is not a known attribute name"});
        }
        auto check_values = [&](const std::vector<std::string>& values) {
            for (const auto& value : values) {
                bool seen = false;
                for (const auto& [id, device] : store.devices) {
                    const std::string* v = device.attributes.find(attr);
                    if (v != nullptr && *v == value) {
                        seen = true;
                        break;
                    }
                }
                if (!seen) {
                    out.push_back({Conflict::Severity::warning, Conflict::Kind::unknown_attribute_value,
                                   "no registered device has " + attr + "=" + value});
                }
            }
        };
        check_values(constraint.includes);
        check_values(constraint.excludes);
    }
    return out;
}

std::vector<Conflict> detect_conflicts(const model::AccessPolicy& candidate, const PolicyStore& store) {
    std::vector<Conflict> out;
    if (store.policies.contains(candidate.name)) {
        out.push_back({Conflict::Severity::error, Conflict::Kind::duplicate_name,
                       "policy '" + candidate.name + "' already exists"});
    }
    bool source_ok = store.groups.contains(candidate.source);
    if (!source_ok) {
        out.push_back({Conflict::Severity::error, Conflict::Kind::dangling_reference,
                       "source group '" + candidate.source + "' is not defined"});
    }
    if (!store.groups.contains(candidate.destination)) {
        out.push_back({Conflict::Severity::error, Conflict::Kind::dangling_reference,
                       "destination group '" + candidate.destination + "' is not defined"});
    }
    if (source_ok && candidate.is_include_policy()) {
        const model::GroupSpec& source = store.groups.at(candidate.source);
        std::set<model::CapabilityName> available;
        for (const auto& [id, device] : store.devices) {
            if (device.kind != DeviceKind::native) continue;
            if (!matches_group(device.attributes, source)) continue;
            available.insert(device.capabilities.begin(), device.capabilities.end());
        }
        for (const auto& entry : candidate.includes) {
            if (!available.contains(entry.capability)) {
                out.push_back({Conflict::Severity::error, Conflict::Kind::unknown_capability,
                               "no device of group '" + candidate.source + "' exposes capability '" +
                                   entry.capability.value + "'"});
            }
        }
    }
    return out;
}

std::string_view conflict_kind_name(Conflict::Kind kind) {
    switch (kind) {
        case Conflict::Kind::duplicate_name: return "duplicate-name";
        case Conflict::Kind::dangling_reference: return "dangling-reference";
        case Conflict::Kind::unknown_capability: return "unknown-capability";
        case Conflict::Kind::unknown_attribute_name: return "unknown-attribute-name";
        case Conflict::Kind::unknown_attribute_value: return "unknown-attribute-value";
    }
    return "unknown";
}

std::string store_to_yaml(const PolicyStore& store) {
    model::PolicyDocument doc;
    for (const auto& [name, g] : store.groups) doc.groups.push_back(g);
    for (const auto& [name, p] : store.policies) doc.policies.push_back(p);
    const YAML::Node doc_node = YAML::Load(model::serialize_policy_document(doc));

    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "revision" << YAML::Value << store.revision;
    out << YAML::Key << "groups" << YAML::Value << doc_node["groups"];
    out << YAML::Key << "policies" << YAML::Value << doc_node["policies"];
    out << YAML::Key << "devices" << YAML::Value;
    if (store.devices.empty()) {
        out << YAML::Flow << YAML::BeginSeq << YAML::EndSeq;
    } else {
        out << YAML::BeginSeq;
        for (const auto& [id, d] : store.devices) {
            out << YAML::BeginMap;
            out << YAML::Key << "id" << YAML::Value << d.id;
            out << YAML::Key << "kind" << YAML::Value
                << (d.kind == DeviceKind::native ? "native" : "guest");
            if (!d.address.empty()) out << YAML::Key << "address" << YAML::Value << d.address;
            out << YAML::Key << "attributes" << YAML::Value << YAML::BeginMap;
            for (const auto& [k, v] : d.attributes.entries())
                out << YAML::Key << k << YAML::Value << v;
            out << YAML::EndMap;
            out << YAML::Key << "capabilities" << YAML::Value << YAML::BeginSeq;
            for (const auto& c : d.capabilities) out << c.value;
            out << YAML::EndSeq << YAML::EndMap;
        }
        out << YAML::EndSeq;
    }
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

PolicyStore store_from_yaml(const std::string& text) {
    PolicyStore store;
    model::PolicyDocument doc;
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw Error(Errc::syntax, std::string("malformed store snapshot: ") + e.what());
    }
    if (root.IsNull() || !root.IsDefined()) return store;
    if (!root.IsMap()) throw Error(Errc::schema, "store snapshot root must be a map");

    // The groups/policies sections reuse the policy document parser.
    YAML::Emitter policy_part;
    policy_part << YAML::BeginMap;
    for (const char* key : {"groups", "policies"}) {
        if (root[key]) {
            policy_part << YAML::Key << key << YAML::Value << root[key];
        }
    }
    policy_part << YAML::EndMap;
    doc = model::parse_policy_document(policy_part.c_str());
    for (const auto& g : doc.groups) store.groups.emplace(g.name, g);
    for (const auto& p : doc.policies) store.policies.emplace(p.name, p);

    if (root["revision"]) store.revision = root["revision"].as<std::uint64_t>();
    const YAML::Node devices = root["devices"];
    if (devices && devices.IsSequence()) {
        for (const auto& node : devices) {
            DeviceRecord d;
            d.id = node["id"].as<std::string>();
            const std::string kind = node["kind"] ? node["kind"].as<std::string>() : "guest";
            d.kind = kind == "native" ? DeviceKind::native : DeviceKind::guest;
            if (node["address"]) d.address = node["address"].as<std::string>();
            if (node["attributes"]) {
                for (const auto& kv : node["attributes"]) {
                    d.attributes.set(kv.first.as<std::string>(), kv.second.as<std::string>());
                }
            }
            if (node["capabilities"]) {
                for (const auto& c : node["capabilities"]) {
                    d.capabilities.insert(model::CapabilityName::parse(c.as<std::string>()));
                }
            }
            d.validate();
            if (!store.devices.emplace(d.id, d).second)
                throw Error(Errc::schema, "duplicate device '" + d.id + "' in snapshot");
        }
    }
    // Snapshot integrity: policies must reference stored groups.
    for (const auto& [name, p] : store.policies) {
        if (!store.groups.contains(p.source) || !store.groups.contains(p.destination))
            throw Error(Errc::schema, "policy '" + name + "' references an undefined group");
    }
    return store;
}

SharedStore::SharedStore() : current_(std::make_shared<const PolicyStore>()) {}

SharedStore::SharedStore(PolicyStore initial)
    : current_(std::make_shared<const PolicyStore>(std::move(initial))) {}

std::unique_ptr<SharedStore> SharedStore::open(const std::filesystem::path& dir,
                                               std::uint64_t snapshot_every) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(Errc::io, "cannot create store directory " + dir.string() + ": " + ec.message());

    PolicyStore store;
    const fs::path snapshot_path = dir / "snapshot.yaml";
    if (fs::exists(snapshot_path)) {
        std::ifstream in(snapshot_path);
        if (!in) throw Error(Errc::io, "cannot read " + snapshot_path.string());
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        store = store_from_yaml(text);
    }

    const fs::path journal_path = dir / "journal.jsonl";
    if (fs::exists(journal_path)) {
        std::ifstream in(journal_path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            Json entry;
            try {
                entry = Json::parse(line);
            } catch (const Json::exception& e) {
                throw Error(Errc::io, journal_path.string() + ":" + std::to_string(lineno) +
                                          ": bad journal entry: " + e.what());
            }
            const std::uint64_t revision = entry.at("revision").get<std::uint64_t>();
            if (revision <= store.revision) continue; // already covered by the snapshot
            Mutation m = Mutation::from_json(entry);
            apply_raw(store, m);
            store.revision = revision;
        }
    }

    auto out = std::make_unique<SharedStore>(std::move(store));
    out->dir_ = dir;
    out->snapshot_every_ = snapshot_every == 0 ? 1 : snapshot_every;
    out->journal_.open(journal_path, std::ios::app);
    if (!out->journal_) throw Error(Errc::io, "cannot append to " + journal_path.string());
    return out;
}

std::shared_ptr<const PolicyStore> SharedStore::snapshot() const {
    std::lock_guard lock(mutex_);
    return current_;
}

ChangeResult SharedStore::apply(const Mutation& mutation, std::int64_t now_s) {
    std::lock_guard lock(mutex_);
    PolicyStore next = *current_;
    ChangeResult result = apply_change(next, mutation, now_s);
    current_ = std::make_shared<const PolicyStore>(std::move(next));
    if (!dir_.empty()) persist(mutation, result.revision, now_s);
    return result;
}

void SharedStore::set_default_ttl(std::int64_t ttl_s) {
    std::lock_guard lock(mutex_);
    PolicyStore next = *current_;
    next.default_ttl_s = ttl_s;
    current_ = std::make_shared<const PolicyStore>(std::move(next));
}

void SharedStore::persist(const Mutation& mutation, std::uint64_t revision, std::int64_t now_s) {
    Json entry = mutation.to_json();
    entry["revision"] = revision;
    entry["timestamp"] = now_s;
    journal_ << entry.dump() << "\n";
    journal_.flush();

    if (++since_snapshot_ < snapshot_every_) return;
    since_snapshot_ = 0;
    const std::filesystem::path tmp = dir_ / "snapshot.yaml.tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << store_to_yaml(*current_);
        if (!out) throw Error(Errc::io, "cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, dir_ / "snapshot.yaml");
    // Journal restarts after each snapshot; replay only needs newer entries.
    journal_.close();
    journal_.open(dir_ / "journal.jsonl", std::ios::trunc);
}

} // namespace collabiot::engine
