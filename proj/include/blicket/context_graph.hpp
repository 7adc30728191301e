#pragma once
// Typed-state directed graph defining the agent's problem space. Rendered
// into the per-turn prompt; transitions are validated against the topology;
// dynamic behaviors may grow it at runtime (never shrink it).

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace blicket {

enum class StateType { action, decision, reflection };

const char* to_string(StateType t);
StateType state_type_from_string(const std::string& s);

struct StateNode {
    std::string name;  // UPPER_SNAKE, unique within a graph
    StateType state_type = StateType::action;
    std::string objective;
    std::vector<std::string> guidelines;
    std::optional<int> added_at_step;  // absent for base states
    bool operator==(const StateNode&) const = default;
};

struct TransitionEdge {
    std::string from;
    std::string to;
    std::string condition;  // advisory text, evaluated by the policy, never enforced
    bool operator==(const TransitionEdge&) const = default;
};

struct GraphModification {
    std::vector<StateNode> new_states;
    std::vector<TransitionEdge> new_edges;
    std::string source_behavior;
    bool operator==(const GraphModification&) const = default;
};

struct ModificationRecord {
    int step = 0;
    std::string source_behavior;
    std::vector<std::string> added_states;
    int added_edges = 0;
    bool operator==(const ModificationRecord&) const = default;
};

struct TransitionResult {
    bool accepted = false;
    std::string reason;  // "unknown-state" or "no-edge" when rejected
};

struct TransitionRecord {
    std::string target;
    bool accepted = false;
    std::string reason;
    bool operator==(const TransitionRecord&) const = default;
};

class GraphError : public std::runtime_error {
public:
    explicit GraphError(const std::string& what) : std::runtime_error(what) {}
};

class ContextGraph {
public:
    const std::vector<StateNode>& states() const { return states_; }
    const std::vector<TransitionEdge>& edges() const { return edges_; }
    const std::string& current() const { return current_; }
    const std::vector<ModificationRecord>& modification_log() const { return modification_log_; }
    const std::vector<TransitionRecord>& transition_log() const { return transition_log_; }

    bool has_state(const std::string& name) const;
    const StateNode* find_state(const std::string& name) const;
    bool has_edge(const std::string& from, const std::string& to) const;
    std::vector<const TransitionEdge*> outgoing(const std::string& from) const;

    // Accepted iff an edge current -> target exists; on acceptance current is
    // updated. Every call, accepted or rejected, is logged.
    TransitionResult validate_transition(const std::string& target);

    // Appends states and edges; never deletes. Throws GraphError on a
    // duplicate state name or a dangling edge endpoint.
    void apply_modification(const GraphModification& mod, int step);

    // Three layers: current state block, condensed overview with a
    // positional marker, and (when present) the last 3 modifications.
    // Byte-stable for identical graphs; format pinned by a golden file.
    std::string render() const;

    static ContextGraph base_graph();
    static ContextGraph from_json(const nlohmann::json& j);

private:
    std::vector<StateNode> states_;
    std::vector<TransitionEdge> edges_;
    std::string current_;
    std::vector<ModificationRecord> modification_log_;
    std::vector<TransitionRecord> transition_log_;
};

}  // namespace blicket
