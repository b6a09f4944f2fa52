#include "collabiot/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

namespace collabiot::model {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_token(std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::islower(c) || std::isdigit(c) || c == '-' || c == '_' || c == '.';
    });
}

[[noreturn]] void fail_schema(const std::string& path, const std::string& msg) {
    throw Error(Errc::schema, path + ": " + msg, path);
}

std::string scalar_at(const YAML::Node& node, const std::string& path) {
    if (!node || !node.IsScalar()) fail_schema(path, "expected a scalar value");
    return node.as<std::string>();
}

// Lowercased token scalar (attribute names, attribute values, capability parts).
std::string token_at(const YAML::Node& node, const std::string& path) {
    std::string v = lower(scalar_at(node, path));
    if (!is_token(v)) fail_schema(path, "'" + v + "' is not a lowercase token");
    return v;
}

void reject_unknown_keys(const YAML::Node& map, std::initializer_list<const char*> allowed,
                         const std::string& path) {
    for (const auto& kv : map) {
        const std::string key = kv.first.as<std::string>();
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }) == allowed.end()) {
            fail_schema(path, "unknown key '" + key + "'");
        }
    }
}

// Formats a double without trailing noise; integral values print as integers.
std::string format_number(double v) {
    if (v == std::floor(v) && std::abs(v) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.0f", v);
        return buf;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint32_t default_burst(double rate_per_s) {
    double b = std::ceil(rate_per_s);
    if (b < 1.0) b = 1.0;
    return static_cast<std::uint32_t>(b);
}

} // namespace

void AttributeMap::set(std::string name, std::string value) {
    name = lower(name);
    value = lower(value);
    if (!is_token(name)) throw Error(Errc::schema, "attribute name '" + name + "' is not a lowercase token");
    if (!is_token(value)) throw Error(Errc::schema, "attribute value '" + value + "' is not a lowercase token");
    auto [it, inserted] = entries_.emplace(std::move(name), std::move(value));
    if (!inserted) throw Error(Errc::schema, "duplicate attribute '" + it->first + "'");
}

const std::string* AttributeMap::find(const std::string& name) const {
    auto it = entries_.find(lower(name));
    return it == entries_.end() ? nullptr : &it->second;
}

CapabilityName CapabilityName::parse(std::string_view text, const std::string& path) {
    std::string v = lower(text);
    auto us = v.find('_');
    auto valid_part = [](std::string_view p) {
        return !p.empty() && std::all_of(p.begin(), p.end(), [](unsigned char c) {
            return std::islower(c) || std::isdigit(c);
        });
    };
    if (us == std::string::npos || !valid_part(std::string_view(v).substr(0, us)) ||
        !valid_part(std::string_view(v).substr(us + 1))) {
        std::string msg = "capability '" + v + "' does not match <device-type>_<action>";
        if (path.empty()) throw Error(Errc::schema, msg);
        fail_schema(path, msg);
    }
    return CapabilityName{std::move(v)};
}

std::string CapabilityName::device_type() const {
    return value.substr(0, value.find('_'));
}

Limit Limit::rate(double per_s, std::uint32_t burst) {
    if (per_s <= 0.0) throw Error(Errc::schema, "rate must be positive");
    if (burst == 0) throw Error(Errc::schema, "burst must be positive");
    Limit l;
    l.kind = Kind::rate;
    l.rate_per_s = per_s;
    l.burst = burst;
    return l;
}

Limit Limit::max_uses(std::uint64_t count) {
    if (count == 0) throw Error(Errc::schema, "max-uses count must be positive");
    Limit l;
    l.kind = Kind::max_uses;
    l.count = count;
    return l;
}

Limit Limit::parse_scalar(const std::string& text, const std::string& path) {
    std::istringstream in(text);
    double number = 0.0;
    std::string unit;
    if (!(in >> number) || !(in >> unit)) {
        fail_schema(path, "limit '" + text + "' is not of the form '<n> req/sec|req/min|uses'");
    }
    std::string rest;
    if (in >> rest) fail_schema(path, "limit '" + text + "' has trailing content");
    unit = lower(unit);
    if (number <= 0.0) fail_schema(path, "limit value must be positive");
    if (unit == "req/sec" || unit == "req/s") {
        return rate(number, default_burst(number));
    }
    if (unit == "req/min" || unit == "req/m") {
        double per_s = number / 60.0;
        return rate(per_s, default_burst(per_s));
    }
    if (unit == "uses" || unit == "use") {
        if (number != std::floor(number)) fail_schema(path, "use count must be an integer");
        return max_uses(static_cast<std::uint64_t>(number));
    }
    fail_schema(path, "unknown limit unit '" + unit + "'");
}

bool Limit::burst_is_default() const {
    return kind == Kind::rate && burst == default_burst(rate_per_s);
}

std::string Limit::to_spec_string() const {
    if (kind == Kind::max_uses) return format_number(static_cast<double>(count)) + " uses";
    // Prefer whole req/sec, then whole req/min, then decimal req/sec.
    if (rate_per_s == std::floor(rate_per_s)) return format_number(rate_per_s) + " req/sec";
    double per_min = rate_per_s * 60.0;
    if (per_min == std::floor(per_min)) return format_number(per_min) + " req/min";
    return format_number(rate_per_s) + " req/sec";
}

bool limit_at_least_as_permissive(const std::optional<Limit>& a, const std::optional<Limit>& b) {
    if (!a.has_value()) return true;  // no limit admits everything
    if (!b.has_value()) return false;
    if (a->kind != b->kind) return a->kind == Limit::Kind::rate; // any rate beats any use count
    if (a->kind == Limit::Kind::rate) {
        if (a->rate_per_s != b->rate_per_s) return a->rate_per_s > b->rate_per_s;
        return a->burst >= b->burst;
    }
    return a->count >= b->count;
}

std::vector<std::string> AttributeRegistry::default_names() {
    return {"location", "type", "relation", "owner", "sens-level", "id",
            "status", "manufacturer", "battery", "context"};
}

bool AttributeRegistry::knows(const std::string& name) const {
    return std::find(known_names.begin(), known_names.end(), lower(name)) != known_names.end();
}

namespace {

// "- name: livingroom" entries under includes/excludes.
std::string parse_name_entry(const YAML::Node& node, const std::string& path) {
    if (node.IsScalar()) return token_at(node, path);
    if (!node.IsMap()) fail_schema(path, "expected '- name: <value>'");
    reject_unknown_keys(node, {"name"}, path);
    if (!node["name"]) fail_schema(path, "missing key 'name'");
    return token_at(node["name"], path + ".name");
}

AttributeConstraint parse_constraint(const YAML::Node& node, const std::string& path) {
    if (!node.IsMap()) fail_schema(path, "expected a map with includes/excludes");
    reject_unknown_keys(node, {"includes", "excludes"}, path);
    AttributeConstraint out;
    auto parse_list = [&](const char* key, std::vector<std::string>& dst) {
        const YAML::Node list = node[key];
        if (!list) return;
        if (!list.IsSequence()) fail_schema(path + "." + key, "expected a list");
        for (std::size_t i = 0; i < list.size(); ++i) {
            std::string p = path + "." + key + "[" + std::to_string(i) + "]";
            std::string v = parse_name_entry(list[i], p);
            if (std::find(dst.begin(), dst.end(), v) != dst.end())
                fail_schema(p, "duplicate value '" + v + "'");
            dst.push_back(std::move(v));
        }
    };
    parse_list("includes", out.includes);
    parse_list("excludes", out.excludes);
    if (out.includes.empty() && out.excludes.empty())
        fail_schema(path, "constraint needs a non-empty includes or excludes list");
    for (const auto& v : out.includes) {
        if (std::find(out.excludes.begin(), out.excludes.end(), v) != out.excludes.end())
            fail_schema(path, "value '" + v + "' appears in both includes and excludes");
    }
    return out;
}

GroupSpec parse_group(const YAML::Node& node, const std::string& path,
                      std::vector<ParseWarning>* warnings, const AttributeRegistry& registry) {
    if (!node.IsMap()) fail_schema(path, "expected a group map");
    reject_unknown_keys(node, {"name", "spec"}, path);
    GroupSpec g;
    if (!node["name"]) fail_schema(path, "missing key 'name'");
    g.name = scalar_at(node["name"], path + ".name");
    if (g.name.empty()) fail_schema(path + ".name", "group name must be non-empty");
    if (!node["spec"] || !node["spec"].IsMap()) fail_schema(path + ".spec", "missing 'spec' map");
    reject_unknown_keys(node["spec"], {"attributes"}, path + ".spec");
    const YAML::Node attrs = node["spec"]["attributes"];
    if (!attrs || !attrs.IsMap()) fail_schema(path + ".spec.attributes", "missing 'attributes' map");
    for (const auto& kv : attrs) {
        std::string raw = kv.first.as<std::string>();
        std::string attr = lower(raw);
        std::string apath = path + ".spec.attributes." + attr;
        if (!is_token(attr)) fail_schema(apath, "attribute name is not a lowercase token");
        if (g.constraints.contains(attr)) fail_schema(apath, "duplicate attribute '" + attr + "'");
        if (warnings && !registry.knows(attr))
            warnings->push_back({apath, "attribute name '" + attr + "' is not in the known-attribute registry"});
        g.constraints.emplace(attr, parse_constraint(kv.second, apath));
    }
    if (g.constraints.empty()) fail_schema(path + ".spec.attributes", "group needs at least one attribute constraint");
    return g;
}

std::optional<Limit> parse_limit_node(const YAML::Node& node, const std::string& path) {
    if (!node) return std::nullopt;
    if (node.IsScalar()) return Limit::parse_scalar(node.as<std::string>(), path);
    if (!node.IsMap()) fail_schema(path, "expected a limit string or map");
    reject_unknown_keys(node, {"rate", "burst", "uses"}, path);
    if (node["uses"]) {
        if (node["rate"] || node["burst"]) fail_schema(path, "'uses' cannot be combined with rate/burst");
        long long n = 0;
        try {
            n = node["uses"].as<long long>();
        } catch (const YAML::Exception&) {
            fail_schema(path + ".uses", "expected an integer");
        }
        if (n <= 0) fail_schema(path + ".uses", "use count must be positive");
        return Limit::max_uses(static_cast<std::uint64_t>(n));
    }
    if (!node["rate"]) fail_schema(path, "limit map needs 'rate' or 'uses'");
    Limit base;
    try {
        base = Limit::rate(node["rate"].as<double>(), 1);
        base.burst = default_burst(base.rate_per_s);
    } catch (const YAML::Exception&) {
        base = Limit::parse_scalar(node["rate"].as<std::string>(), path + ".rate");
        if (base.kind != Limit::Kind::rate) fail_schema(path + ".rate", "expected a rate");
    }
    if (node["burst"]) {
        long long b = 0;
        try {
            b = node["burst"].as<long long>();
        } catch (const YAML::Exception&) {
            fail_schema(path + ".burst", "expected an integer");
        }
        if (b <= 0) fail_schema(path + ".burst", "burst must be positive");
        base.burst = static_cast<std::uint32_t>(b);
    }
    return base;
}

std::int64_t parse_ttl(const YAML::Node& node, const std::string& path) {
    std::string text = scalar_at(node, path);
    std::istringstream in(text);
    double value = 0.0;
    if (!(in >> value) || value <= 0.0) fail_schema(path, "ttl must be a positive duration");
    std::string unit;
    in >> unit;
    double scale = 1.0;
    if (unit == "m" || unit == "min") scale = 60.0;
    else if (unit == "h") scale = 3600.0;
    else if (!unit.empty() && unit != "s" && unit != "sec")
        fail_schema(path, "unknown ttl unit '" + unit + "'");
    return static_cast<std::int64_t>(value * scale);
}

AccessPolicy parse_policy(const YAML::Node& node, const std::string& path) {
    if (!node.IsMap()) fail_schema(path, "expected a policy map");
    reject_unknown_keys(node, {"name", "source", "destination", "capability", "ttl"}, path);
    AccessPolicy p;
    for (const char* key : {"name", "source", "destination"}) {
        if (!node[key]) fail_schema(path, std::string("missing key '") + key + "'");
    }
    p.name = scalar_at(node["name"], path + ".name");
    p.source = scalar_at(node["source"], path + ".source");
    p.destination = scalar_at(node["destination"], path + ".destination");
    if (p.name.empty()) fail_schema(path + ".name", "policy name must be non-empty");
    if (p.source == p.destination)
        fail_schema(path, "source and destination must name different groups");

    const YAML::Node cap = node["capability"];
    if (!cap || !cap.IsMap()) fail_schema(path + ".capability", "missing 'capability' map");
    reject_unknown_keys(cap, {"includes", "excludes"}, path + ".capability");
    const YAML::Node inc = cap["includes"];
    const YAML::Node exc = cap["excludes"];
    const bool has_inc = inc && inc.size() > 0;
    const bool has_exc = exc && exc.size() > 0;
    if (has_inc == has_exc) {
        fail_schema(path + ".capability",
                    "exactly one of includes/excludes must be non-empty");
    }
    if (has_inc) {
        if (!inc.IsSequence()) fail_schema(path + ".capability.includes", "expected a list");
        for (std::size_t i = 0; i < inc.size(); ++i) {
            std::string epath = path + ".capability.includes[" + std::to_string(i) + "]";
            const YAML::Node entry = inc[i];
            CapabilityEntry ce;
            if (entry.IsScalar()) {
                ce.capability = CapabilityName::parse(entry.as<std::string>(), epath);
            } else if (entry.IsMap()) {
                reject_unknown_keys(entry, {"name", "limit"}, epath);
                if (!entry["name"]) fail_schema(epath, "missing key 'name'");
                ce.capability = CapabilityName::parse(scalar_at(entry["name"], epath + ".name"), epath + ".name");
                ce.limit = parse_limit_node(entry["limit"], epath + ".limit");
            } else {
                fail_schema(epath, "expected '- name: <capability>'");
            }
            for (const auto& prev : p.includes) {
                if (prev.capability == ce.capability)
                    fail_schema(epath, "duplicate capability '" + ce.capability.value + "'");
            }
            p.includes.push_back(std::move(ce));
        }
    } else {
        if (!exc.IsSequence()) fail_schema(path + ".capability.excludes", "expected a list");
        for (std::size_t i = 0; i < exc.size(); ++i) {
            std::string epath = path + ".capability.excludes[" + std::to_string(i) + "]";
            const YAML::Node entry = exc[i];
            CapabilityName name;
            if (entry.IsScalar()) {
                name = CapabilityName::parse(entry.as<std::string>(), epath);
            } else if (entry.IsMap()) {
                // Excludes never carry limits.
                reject_unknown_keys(entry, {"name"}, epath);
                if (!entry["name"]) fail_schema(epath, "missing key 'name'");
                name = CapabilityName::parse(scalar_at(entry["name"], epath + ".name"), epath + ".name");
            } else {
                fail_schema(epath, "expected '- name: <capability>'");
            }
            if (std::find(p.excludes.begin(), p.excludes.end(), name) != p.excludes.end())
                fail_schema(epath, "duplicate capability '" + name.value + "'");
            p.excludes.push_back(std::move(name));
        }
    }
    if (node["ttl"]) p.ttl_s = parse_ttl(node["ttl"], path + ".ttl");
    return p;
}

} // namespace

PolicyDocument parse_policy_document(const std::string& text, std::vector<ParseWarning>* warnings,
                                     const AttributeRegistry& registry) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw Error(Errc::syntax, std::string("malformed YAML: ") + e.what());
    }
    PolicyDocument doc;
    if (root.IsNull() || !root.IsDefined()) return doc;
    if (!root.IsMap()) throw Error(Errc::schema, "document root must be a map", "");
    reject_unknown_keys(root, {"groups", "policies"}, "document");

    const YAML::Node groups = root["groups"];
    if (groups && !groups.IsNull()) {
        if (!groups.IsSequence()) fail_schema("groups", "expected a list");
        std::set<std::string> seen;
        for (std::size_t i = 0; i < groups.size(); ++i) {
            GroupSpec g = parse_group(groups[i], "groups[" + std::to_string(i) + "]", warnings, registry);
            if (!seen.insert(g.name).second)
                fail_schema("groups[" + std::to_string(i) + "].name", "duplicate group name '" + g.name + "'");
            doc.groups.push_back(std::move(g));
        }
    }
    const YAML::Node policies = root["policies"];
    if (policies && !policies.IsNull()) {
        if (!policies.IsSequence()) fail_schema("policies", "expected a list");
        std::set<std::string> seen;
        for (std::size_t i = 0; i < policies.size(); ++i) {
            AccessPolicy p = parse_policy(policies[i], "policies[" + std::to_string(i) + "]");
            if (!seen.insert(p.name).second)
                fail_schema("policies[" + std::to_string(i) + "].name", "duplicate policy name '" + p.name + "'");
            doc.policies.push_back(std::move(p));
        }
    }
    return doc;
}

namespace {

void emit_group(YAML::Emitter& out, const GroupSpec& g) {
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << g.name;
    out << YAML::Key << "spec" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "attributes" << YAML::Value << YAML::BeginMap;
    for (const auto& [attr, constraint] : g.constraints) {
        out << YAML::Key << attr << YAML::Value << YAML::BeginMap;
        auto emit_list = [&](const char* key, const std::vector<std::string>& values) {
            if (values.empty()) return;
            out << YAML::Key << key << YAML::Value << YAML::BeginSeq;
            for (const auto& v : values) {
                out << YAML::BeginMap << YAML::Key << "name" << YAML::Value << v << YAML::EndMap;
            }
            out << YAML::EndSeq;
        };
        emit_list("includes", constraint.includes);
        emit_list("excludes", constraint.excludes);
        out << YAML::EndMap;
    }
    out << YAML::EndMap << YAML::EndMap << YAML::EndMap;
}

void emit_limit(YAML::Emitter& out, const Limit& l) {
    if (l.kind == Limit::Kind::max_uses || l.burst_is_default()) {
        out << l.to_spec_string();
        return;
    }
    out << YAML::BeginMap;
    out << YAML::Key << "rate" << YAML::Value << (format_number(l.rate_per_s) + " req/sec");
    out << YAML::Key << "burst" << YAML::Value << l.burst;
    out << YAML::EndMap;
}

void emit_policy(YAML::Emitter& out, const AccessPolicy& p) {
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << p.name;
    out << YAML::Key << "source" << YAML::Value << p.source;
    out << YAML::Key << "destination" << YAML::Value << p.destination;
    out << YAML::Key << "capability" << YAML::Value << YAML::BeginMap;
    if (p.is_include_policy()) {
        out << YAML::Key << "includes" << YAML::Value << YAML::BeginSeq;
        for (const auto& e : p.includes) {
            out << YAML::BeginMap;
            out << YAML::Key << "name" << YAML::Value << e.capability.value;
            if (e.limit) {
                out << YAML::Key << "limit" << YAML::Value;
                emit_limit(out, *e.limit);
            }
            out << YAML::EndMap;
        }
        out << YAML::EndSeq;
    } else {
        out << YAML::Key << "excludes" << YAML::Value << YAML::BeginSeq;
        for (const auto& c : p.excludes) {
            out << YAML::BeginMap << YAML::Key << "name" << YAML::Value << c.value << YAML::EndMap;
        }
        out << YAML::EndSeq;
    }
    out << YAML::EndMap;
    if (p.ttl_s) out << YAML::Key << "ttl" << YAML::Value << *p.ttl_s;
    out << YAML::EndMap;
}

} // namespace

std::string serialize_policy_document(const PolicyDocument& doc) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "groups" << YAML::Value;
    if (doc.groups.empty()) {
        out << YAML::Flow << YAML::BeginSeq << YAML::EndSeq;
    } else {
        out << YAML::BeginSeq;
        for (const auto& g : doc.groups) emit_group(out, g);
        out << YAML::EndSeq;
    }
    out << YAML::Key << "policies" << YAML::Value;
    if (doc.policies.empty()) {
        out << YAML::Flow << YAML::BeginSeq << YAML::EndSeq;
    } else {
        out << YAML::BeginSeq;
        for (const auto& p : doc.policies) emit_policy(out, p);
        out << YAML::EndSeq;
    }
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

std::string serialize_group(const GroupSpec& group) {
    YAML::Emitter out;
    out << YAML::BeginMap << YAML::Key << "groups" << YAML::Value << YAML::BeginSeq;
    emit_group(out, group);
    out << YAML::EndSeq << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

std::string serialize_policy(const AccessPolicy& policy) {
    YAML::Emitter out;
    out << YAML::BeginMap << YAML::Key << "policies" << YAML::Value << YAML::BeginSeq;
    emit_policy(out, policy);
    out << YAML::EndSeq << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

Json group_to_json(const GroupSpec& group) {
    Json attrs = Json::object();
    for (const auto& [attr, c] : group.constraints) {
        Json node = Json::object();
        auto entries = [](const std::vector<std::string>& vs) {
            Json list = Json::array();
            for (const auto& v : vs) list.push_back(Json{{"name", v}});
            return list;
        };
        if (!c.includes.empty()) node["includes"] = entries(c.includes);
        if (!c.excludes.empty()) node["excludes"] = entries(c.excludes);
        attrs[attr] = std::move(node);
    }
    return Json{{"name", group.name}, {"spec", Json{{"attributes", std::move(attrs)}}}};
}

GroupSpec group_from_json(const Json& j) {
    PolicyDocument doc = parse_policy_document(Json{{"groups", Json::array({j})}}.dump());
    return doc.groups.at(0);
}

Json policy_to_json(const AccessPolicy& p) {
    Json cap = Json::object();
    if (p.is_include_policy()) {
        Json list = Json::array();
        for (const auto& e : p.includes) {
            Json entry{{"name", e.capability.value}};
            if (e.limit) entry["limit"] = e.limit->to_spec_string();
            list.push_back(std::move(entry));
        }
        cap["includes"] = std::move(list);
    } else {
        Json list = Json::array();
        for (const auto& c : p.excludes) list.push_back(Json{{"name", c.value}});
        cap["excludes"] = std::move(list);
    }
    Json out{{"name", p.name}, {"source", p.source}, {"destination", p.destination},
             {"capability", std::move(cap)}};
    if (p.ttl_s) out["ttl"] = *p.ttl_s;
    return out;
}

AccessPolicy policy_from_json(const Json& j) {
    PolicyDocument doc = parse_policy_document(Json{{"policies", Json::array({j})}}.dump());
    return doc.policies.at(0);
}

Json limit_to_json(const Limit& l) {
    if (l.kind == Limit::Kind::rate) {
        return Json{{"kind", "rate"}, {"rate", l.rate_per_s}, {"burst", l.burst}};
    }
    return Json{{"kind", "max-uses"}, {"count", l.count}};
}

Limit limit_from_json(const Json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "rate") {
        return Limit::rate(j.at("rate").get<double>(), j.at("burst").get<std::uint32_t>());
    }
    if (kind == "max-uses") {
        return Limit::max_uses(j.at("count").get<std::uint64_t>());
    }
    throw Error(Errc::schema, "unknown limit kind '" + kind + "'");
}

Json attributes_to_json(const AttributeMap& attrs) {
    Json out = Json::object();
    for (const auto& [k, v] : attrs.entries()) out[k] = v;
    return out;
}

AttributeMap attributes_from_json(const Json& j) {
    AttributeMap out;
    for (const auto& [k, v] : j.items()) out.set(k, v.get<std::string>());
    return out;
}

} // namespace collabiot::model

namespace collabiot {

std::string_view errc_name(Errc code) {
    switch (code) {
        case Errc::syntax: return "syntax";
        case Errc::schema: return "schema";
        case Errc::conflict: return "conflict";
        case Errc::not_found: return "not_found";
        case Errc::io: return "io";
        case Errc::crypto: return "crypto";
        case Errc::bad_signature: return "bad_signature";
        case Errc::expired: return "expired";
        case Errc::not_yet_valid: return "not_yet_valid";
        case Errc::malformed_token: return "malformed_token";
        case Errc::invalidated: return "invalidated";
        case Errc::wrong_audience: return "wrong_audience";
        case Errc::backend: return "backend";
        case Errc::unparseable_verdict: return "unparseable_verdict";
        case Errc::queue_full: return "queue_full";
        case Errc::adapter: return "adapter";
        case Errc::delivery: return "delivery";
        case Errc::unknown_capability: return "unknown_capability";
        case Errc::setup: return "setup";
        case Errc::unauthorized: return "unauthorized";
        case Errc::internal: return "internal";
    }
    return "internal";
}

} // namespace collabiot
