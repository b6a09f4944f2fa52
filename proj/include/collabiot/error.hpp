#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace collabiot {

// Every failure in the library is an Error with a stable code. Denials and
// conflicts are ordinary return values, not errors; see engine.hpp/proxy.hpp.
enum class Errc {
    syntax,              // malformed YAML / JSON input
    schema,              // well-formed input violating the document schema
    conflict,            // mutation references undefined names or duplicates
    not_found,           // unknown device / policy / group id
    io,                  // filesystem or socket failure
    crypto,              // key handling or signing failure
    bad_signature,       // token signature does not verify
    expired,             // token past exp (+ skew)
    not_yet_valid,       // token before nbf (- skew)
    malformed_token,     // token structure/encoding/JSON invalid
    invalidated,         // token named by an invalidation notice
    wrong_audience,      // token aud does not match this proxy's device
    backend,             // LLM backend transport failure or timeout
    unparseable_verdict, // critic reply fits neither accepted form
    queue_full,          // dispatch queue at capacity
    adapter,             // device adapter raised an execution error
    delivery,            // invalidation delivery to a proxy failed
    unknown_capability,  // context override names a capability nobody has
    setup,               // scenario/bench could not be brought up
    unauthorized,        // authentication or admin-channel check failed
    internal,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, std::string message)
        : std::runtime_error(std::move(message)), code_(code) {}

    Error(Errc code, std::string message, std::string path)
        : std::runtime_error(std::move(message)), code_(code), path_(std::move(path)) {}

    Errc code() const noexcept { return code_; }

    // Document path for syntax/schema errors, e.g. "groups[0].spec.attributes.location".
    const std::string& path() const noexcept { return path_; }

private:
    Errc code_;
    std::string path_;
};

} // namespace collabiot
