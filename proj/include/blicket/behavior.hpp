#pragma once
// Runtime monitors DB1-DB4: deterministic pre-screens, pluggable 0-10
// trigger scoring, competitive inhibition (highest scorer fires, at most one
// runner-up within the margin), one-shot firing, graph patches, and system
// notifications.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "blicket/context_graph.hpp"
#include "blicket/env.hpp"

namespace blicket {

enum class BehaviorId {
    exploration_stagnation,   // DB1
    order_hypothesis,         // DB2
    stochasticity_hypothesis, // DB3
    rule_change_hypothesis,   // DB4
};

const char* to_string(BehaviorId id);
BehaviorId behavior_id_from_string(const std::string& s);

struct BehaviorSpec {
    BehaviorId id = BehaviorId::exploration_stagnation;
    int min_steps = 6;
    bool requires_never_activated = false;
    std::optional<int> stagnation_threshold;
    double fire_threshold = 6.0;
    std::string evaluation_prompt;
    GraphModification graph_patch;
    std::string notification;

    std::vector<std::string> validate() const;
    bool operator==(const BehaviorSpec&) const = default;
};

// Shipped defaults (also configs/behaviors.json).
std::vector<BehaviorSpec> default_behaviors();
std::vector<BehaviorSpec> behaviors_from_json(const nlohmann::json& j);

// One conversation message; harness history and condensed context share it.
struct Message {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;
    bool operator==(const Message&) const = default;
};

struct CondensedContext {
    std::vector<Message> recent_messages;  // last <= 5, each content <= 300 chars
    std::string current_state;
    std::string exploration_summary;
};

struct EpisodeSnapshot {
    int steps_used = 0;
    int activation_count = 0;
    int last_activation_step = 0;  // 0 = never activated
};

// One evaluation per step of a detector configuration: the objects present
// in placement order, plus the observed outcome.
struct ConfigOutcome {
    std::vector<char> ordering;
    DetectorStatus outcome = DetectorStatus::inactive;
};

struct TraceFeatures {
    int steps_used = 0;
    int activation_count = 0;
    int last_activation_step = 0;
    std::vector<ConfigOutcome> evaluations;  // one per consumed step, in order
};

// Deterministic gate: min steps elapsed, not already fired, the
// never-activated requirement, and the stagnation threshold.
bool prescreen(const BehaviorSpec& spec, const EpisodeSnapshot& snapshot,
               const std::set<BehaviorId>& fired);

CondensedContext condense(const std::vector<Message>& history, const std::string& current_state,
                          const TraceFeatures& features);

// Deterministic stand-in for the external model evaluator; rule table over
// per-configuration outcome histories. Returns 9 or 0.
double heuristic_evaluate(BehaviorId id, const BehaviorSpec& spec, const TraceFeatures& features);

struct TriggerEvaluation {
    BehaviorId behavior_id = BehaviorId::exploration_stagnation;
    int step = 0;
    bool prescreen_passed = false;
    std::optional<double> score;  // present iff prescreen passed and scoring succeeded
    bool fired = false;
    bool runner_up = false;
    std::optional<std::string> error;  // evaluator-unavailable | unparseable-score
    bool operator==(const TriggerEvaluation&) const = default;
};

// Scoring seam: the heuristic built-in and the external endpoint adapter
// both implement this. Returns nullopt on failure and sets error.
class TriggerEvaluator {
public:
    virtual ~TriggerEvaluator() = default;
    virtual std::optional<double> score(const BehaviorSpec& spec, const CondensedContext& ctx,
                                        const TraceFeatures& features, std::string& error) = 0;
};

class HeuristicEvaluator : public TriggerEvaluator {
public:
    std::optional<double> score(const BehaviorSpec& spec, const CondensedContext& ctx,
                                const TraceFeatures& features, std::string& error) override;
};

struct FiringDecision {
    BehaviorId id = BehaviorId::exploration_stagnation;
    double score = 0.0;
    bool runner_up = false;
};

// Candidates must all have passed prescreen and scoring this step. At most
// two fire: the highest eligible scorer, plus the next-highest eligible when
// within the margin. Ties break by id order DB1 < DB2 < DB3 < DB4.
std::vector<FiringDecision> resolve_firings(const std::vector<std::pair<BehaviorId, double>>& candidates,
                                            const std::vector<BehaviorSpec>& specs, double margin);

struct Notification {
    BehaviorId source = BehaviorId::exploration_stagnation;
    std::string text;
};

class BehaviorError : public std::runtime_error {
public:
    explicit BehaviorError(const std::string& what) : std::runtime_error(what) {}
};

class MonitorState {
public:
    explicit MonitorState(std::vector<BehaviorSpec> behaviors, double inhibition_margin = 1.0);

    // Full per-step pipeline, run after the step's observation is in:
    // prescreen every unfired behavior, score the survivors, resolve the
    // competitive inhibition, apply winners' graph patches in firing order,
    // and queue their notifications. Returns this step's evaluations.
    std::vector<TriggerEvaluation> on_step(int step, const EpisodeSnapshot& snapshot,
                                           const CondensedContext& ctx, const TraceFeatures& features,
                                           TriggerEvaluator& evaluator, ContextGraph& graph,
                                           std::vector<Notification>& out_notifications);

    // Applies the behavior's patch (edges to not-yet-existing states are
    // dropped) and queues its notification. Throws BehaviorError on a
    // repeat firing.
    void fire(BehaviorId id, ContextGraph& graph, int step, std::vector<Notification>& out_notifications);

    const std::vector<BehaviorSpec>& behaviors() const { return behaviors_; }
    const std::set<BehaviorId>& fired_ids() const { return fired_; }
    const std::vector<TriggerEvaluation>& evaluations() const { return evaluations_; }
    double inhibition_margin() const { return margin_; }

private:
    const BehaviorSpec& spec_for(BehaviorId id) const;

    std::vector<BehaviorSpec> behaviors_;
    std::set<BehaviorId> fired_;
    std::vector<TriggerEvaluation> evaluations_;
    double margin_ = 1.0;
};

}  // namespace blicket
