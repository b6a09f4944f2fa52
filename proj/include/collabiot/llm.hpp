#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "collabiot/engine.hpp"
#include "collabiot/model.hpp"

// Natural-language intent to validated policy objects: schema-constrained
// generation, a repair feedback loop on validator errors, an actor-critic
// semantic check, and attribute/conflict validation against the store.

namespace collabiot::llm {

using model::Json;

enum class ArtifactKind { group, policy };
std::string_view artifact_kind_name(ArtifactKind kind);
ArtifactKind artifact_kind_from_string(const std::string& name);

struct FewShotExample {
    std::string prompt;
    std::string output; // JSON document text in the policy schema
};

struct GenerationContext {
    std::string schema_description;
    std::vector<FewShotExample> examples;
};

struct GenerationRequest {
    std::string prompt;
    ArtifactKind kind = ArtifactKind::group;
    std::optional<GenerationContext> context; // default: versioned fixtures from share/
    int max_repair_rounds = 3;                // total generation calls allowed
};

// The only side-effecting call in this module.
class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string complete(const std::string& system_context, const std::string& user,
                                 const Json& output_schema) = 0;
};

struct BackendConfig {
    std::string base_url; // full endpoint URL, e.g. http://127.0.0.1:11434/api/chat
    std::string model;
    std::string api_key;
    int timeout_s = 60;
    std::string style = "ollama"; // ollama | openai (request/response field shapes)

    // COLLABIOT_LLM_URL / COLLABIOT_LLM_MODEL / COLLABIOT_LLM_KEY fill gaps.
    static BackendConfig from_env(BackendConfig base = {});
};

std::unique_ptr<LlmBackend> make_http_backend(const BackendConfig& config);

// Deterministic mock: replays a fixed list of replies in call order and logs
// every call. Script format: {"replies": ["...", ...]}.
class ScriptedBackend : public LlmBackend {
public:
    struct Call {
        std::string system_context;
        std::string user;
    };

    explicit ScriptedBackend(std::vector<std::string> replies);
    static ScriptedBackend from_json(const Json& script);

    std::string complete(const std::string& system_context, const std::string& user,
                         const Json& output_schema) override;

    const std::vector<Call>& calls() const { return calls_; }
    std::size_t replies_consumed() const { return next_; }

private:
    std::vector<std::string> replies_;
    std::size_t next_ = 0;
    std::vector<Call> calls_;
};

struct TranscriptEntry {
    std::string stage;   // generate | schema | semantic | attribute
    std::string verdict; // ok | pass | fail | match | mismatch | error
    std::string detail;
    int round = 0;

    bool operator==(const TranscriptEntry&) const = default;
};

enum class PipelineStatus { accepted, rejected_needs_user, backend_error };
std::string_view pipeline_status_name(PipelineStatus status);

struct PipelineOutcome {
    PipelineStatus status = PipelineStatus::backend_error;
    ArtifactKind kind = ArtifactKind::group;
    std::optional<model::GroupSpec> group;
    std::optional<model::AccessPolicy> policy;
    std::vector<TranscriptEntry> transcript;

    bool has_artifact() const { return group.has_value() || policy.has_value(); }
    std::string artifact_yaml() const;
    Json to_json() const; // stable serialization; byte-identical for equal outcomes
};

struct CriticResult {
    bool match = false;
    std::string explanation;
    bool unparseable = false; // reply fit neither accepted form; fail-closed mismatch
};

// Asks the backend whether `rendered` preserves the semantics of the prompt.
// A reply that parses as neither the JSON form nor a yes/no prefix counts as
// a mismatch (fail closed). Throws Errc::backend on transport failure.
CriticResult critic_check(const std::string& original_prompt, const std::string& rendered,
                          LlmBackend& backend);

// Deterministic English rendering used by the critic stage.
std::string render_policy_text(const model::GroupSpec& group);
std::string render_policy_text(const model::AccessPolicy& policy);

// Runs the full pipeline. Accepted artifacts are not committed to the store;
// committing is the caller's (CLI's) explicit action.
PipelineOutcome generate(const GenerationRequest& request, LlmBackend& backend,
                         const engine::PolicyStore& store,
                         const model::AttributeRegistry& registry = {});

// share/ fixtures (few-shot contexts, output schemas, bench prompts).
// Resolution order: COLLABIOT_SHARE_DIR, compile-time source path.
std::string share_file(const std::string& name);
GenerationContext default_context(ArtifactKind kind);
Json output_schema(ArtifactKind kind);

} // namespace collabiot::llm
