#pragma once
// Agent-environment loop for the three-tier hierarchy (base / cg / cg_db):
// prompt assembly, policy invocation, response parsing, transition handling,
// monitor hookup, and trace emission.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "blicket/behavior.hpp"
#include "blicket/context_graph.hpp"
#include "blicket/env.hpp"
#include "blicket/trace.hpp"

namespace blicket {

struct EndpointConfig {
    std::string url;          // e.g. http://127.0.0.1:8808/decide
    double timeout_seconds = 30.0;
};

struct ScaffoldingConfig {
    Tier tier = Tier::base;
    std::optional<ContextGraph> graph_template;          // cg and cg_db
    std::optional<std::vector<BehaviorSpec>> behavior_set;  // cg_db only
    EvaluatorKind evaluator = EvaluatorKind::heuristic;
    std::optional<EndpointConfig> evaluator_endpoint;    // external evaluator
    double inhibition_margin = 1.0;
    bool store_prompt_text = false;

    std::vector<std::string> validate() const;
    static ScaffoldingConfig for_tier(Tier tier, EvaluatorKind evaluator = EvaluatorKind::heuristic);
};

struct PromptContext {
    std::string task_description;
    std::optional<std::string> graph_rendering;      // tier >= cg
    std::vector<std::string> pending_notifications;  // cg_db only
    std::vector<Message> history;
    std::string available_actions;

    // system block (task + graph + menu); notifications ride in history
    std::string system_text() const;
    // canonical byte stream hashed into the step's prompt digest
    std::string full_text() const;
};

struct ParsedResponse {
    std::string reasoning;
    std::optional<std::string> transition_request;
    std::optional<Action> action;
    std::optional<Answer> answer;
    bool parse_ok = false;
};

// Extracts the optional TRANSITION: line and the required ACTION: line
// (numeric menu index or "place X" / "remove X" / "check" / "noop"); check
// needs RULE_TYPE: and BLICKETS: lines. Keys are case-insensitive; the first
// match wins. Failures set parse_ok=false and never throw.
ParsedResponse parse_response(const std::string& text, int object_count);

class Policy {
public:
    virtual ~Policy() = default;
    virtual std::string decide(const PromptContext& ctx) = 0;
};

using PolicyFactory = std::function<std::unique_ptr<Policy>()>;

class PolicyError : public std::runtime_error {
public:
    explicit PolicyError(const std::string& what) : std::runtime_error(what) {}
};

std::string task_description(int object_count);
std::string action_menu(int object_count);
std::string observation_message(int step_index, const Observation& obs,
                                const std::optional<TransitionOutcome>& transition);

// Drives one episode to termination or budget exhaustion. A PolicyError (or
// any exception escaping the policy) aborts the episode; the partial trace
// is returned with aborted=true.
EpisodeTrace run_episode(const EpisodeConfig& config, const ScaffoldingConfig& scaffolding,
                         Policy& policy);

// POST {system_text, messages[], metadata} -> plain-text model reply.
std::unique_ptr<Policy> make_external_policy(const EndpointConfig& endpoint);

// Same wire contract; the response body must parse as a decimal score.
class ExternalEvaluator : public TriggerEvaluator {
public:
    explicit ExternalEvaluator(EndpointConfig endpoint) : endpoint_(std::move(endpoint)) {}
    std::optional<double> score(const BehaviorSpec& spec, const CondensedContext& ctx,
                                const TraceFeatures& features, std::string& error) override;

private:
    EndpointConfig endpoint_;
};

}  // namespace blicket
