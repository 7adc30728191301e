#include "blicket/context_graph.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

namespace blicket {

const char* to_string(StateType t) {
    switch (t) {
        case StateType::action: return "action";
        case StateType::decision: return "decision";
        case StateType::reflection: return "reflection";
    }
    return "?";
}

StateType state_type_from_string(const std::string& s) {
    if (s == "action") return StateType::action;
    if (s == "decision") return StateType::decision;
    if (s == "reflection") return StateType::reflection;
    throw GraphError("unknown state type: " + s);
}

bool ContextGraph::has_state(const std::string& name) const {
    return find_state(name) != nullptr;
}

const StateNode* ContextGraph::find_state(const std::string& name) const {
    for (const auto& s : states_) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

bool ContextGraph::has_edge(const std::string& from, const std::string& to) const {
    return std::any_of(edges_.begin(), edges_.end(), [&](const TransitionEdge& e) {
        return e.from == from && e.to == to;
    });
}

std::vector<const TransitionEdge*> ContextGraph::outgoing(const std::string& from) const {
    std::vector<const TransitionEdge*> out;
    for (const auto& e : edges_) {
        if (e.from == from) out.push_back(&e);
    }
    return out;
}

TransitionResult ContextGraph::validate_transition(const std::string& target) {
    TransitionResult result;
    if (!has_state(target)) {
        result = {false, "unknown-state"};
    } else if (!has_edge(current_, target)) {
        result = {false, "no-edge"};
    } else {
        result = {true, ""};
        current_ = target;
    }
    transition_log_.push_back({target, result.accepted, result.reason});
    return result;
}

void ContextGraph::apply_modification(const GraphModification& mod, int step) {
    for (const auto& s : mod.new_states) {
        if (has_state(s.name)) throw GraphError("duplicate-state-name: " + s.name);
    }
    auto known = [&](const std::string& name) {
        if (has_state(name)) return true;
        return std::any_of(mod.new_states.begin(), mod.new_states.end(),
                           [&](const StateNode& s) { return s.name == name; });
    };
    for (const auto& e : mod.new_edges) {
        if (!known(e.from) || !known(e.to)) {
            throw GraphError("dangling-edge: " + e.from + " -> " + e.to);
        }
        if (has_edge(e.from, e.to)) throw GraphError("duplicate-edge: " + e.from + " -> " + e.to);
    }
    ModificationRecord rec;
    rec.step = step;
    rec.source_behavior = mod.source_behavior;
    rec.added_edges = static_cast<int>(mod.new_edges.size());
    for (const auto& s : mod.new_states) {
        StateNode node = s;
        node.added_at_step = step;
        states_.push_back(std::move(node));
        rec.added_states.push_back(s.name);
    }
    edges_.insert(edges_.end(), mod.new_edges.begin(), mod.new_edges.end());
    modification_log_.push_back(std::move(rec));
}

std::string ContextGraph::render() const {
    std::ostringstream out;
    const StateNode* cur = find_state(current_);
    out << "=== Context Graph ===\n";
    out << "Current State: " << current_ << " [" << to_string(cur->state_type) << "]\n";
    out << "Objective: " << cur->objective << "\n";
    out << "Guidelines:\n";
    for (const auto& g : cur->guidelines) out << "  - " << g << "\n";
    out << "Transitions:\n";
    for (const auto* e : outgoing(current_)) out << "  -> " << e->to << ": " << e->condition << "\n";
    out << "\nGraph overview:\n";
    for (const auto& s : states_) {
        out << "  [" << to_string(s.state_type) << "] " << s.name;
        const auto targets = outgoing(s.name);
        if (!targets.empty()) {
            out << " ->";
            for (std::size_t i = 0; i < targets.size(); ++i) {
                out << (i == 0 ? " " : ", ") << targets[i]->to;
            }
        }
        if (s.name == current_) out << " <-- YOU ARE HERE";
        out << "\n";
    }
    if (!modification_log_.empty()) {
        out << "\nRecent modifications (last 3):\n";
        const std::size_t start = modification_log_.size() > 3 ? modification_log_.size() - 3 : 0;
        for (std::size_t i = start; i < modification_log_.size(); ++i) {
            const auto& m = modification_log_[i];
            out << "  step " << m.step << ": " << m.source_behavior << " added";
            for (std::size_t j = 0; j < m.added_states.size(); ++j) {
                out << (j == 0 ? " " : ", ") << m.added_states[j];
            }
            if (m.added_states.empty()) out << " nothing";
            out << " (+" << m.added_edges << " transitions)\n";
        }
    }
    return out.str();
}

ContextGraph ContextGraph::base_graph() {
    ContextGraph g;
    g.states_ = {
        {"INITIAL_EXPLORATION",
         StateType::action,
         "Test each individual object to learn its effect on the detector.",
         {"Place one object at a time and observe the detector's response",
          "Remove it before testing the next object",
          "Attend to any changes and note which objects produce activation"},
         std::nullopt},
        {"COMBINATION_TESTING",
         StateType::action,
         "Discover how object combinations and arrangements affect activation.",
         {"Test different groupings of objects on the detector",
          "Vary not just which objects are present, but how you arrange and sequence them",
          "Compare results across different configurations",
          "If a configuration that should work doesn't, consider what else might matter"},
         std::nullopt},
        {"HYPOTHESIS_EVALUATION",
         StateType::reflection,
         "Step back and evaluate the accumulated evidence against candidate rules.",
         {"What rule type best explains the activations observed so far?",
          "Which objects does the evidence implicate as blickets?",
          "Are there observations that no current hypothesis can explain?"},
         std::nullopt},
        {"VERIFICATION",
         StateType::decision,
         "Design a discriminating test and commit to a final judgment.",
         {"Choose a test whose outcome differs between rival hypotheses",
          "If the test confirms the hypothesis, submit the answer",
          "If verification fails, return to hypothesis evaluation"},
         std::nullopt},
    };
    g.edges_ = {
        {"INITIAL_EXPLORATION", "COMBINATION_TESTING", "After testing all individual objects"},
        {"COMBINATION_TESTING", "HYPOTHESIS_EVALUATION", "After testing key combinations"},
        {"COMBINATION_TESTING", "INITIAL_EXPLORATION", "If results are confusing, go back to singles"},
        {"HYPOTHESIS_EVALUATION", "VERIFICATION", "When one hypothesis explains all observations"},
        {"HYPOTHESIS_EVALUATION", "COMBINATION_TESTING", "If more combination evidence is needed"},
        {"VERIFICATION", "HYPOTHESIS_EVALUATION", "If verification contradicts the hypothesis"},
    };
    g.current_ = "INITIAL_EXPLORATION";
    return g;
}

ContextGraph ContextGraph::from_json(const nlohmann::json& j) {
    ContextGraph g;
    for (const auto& js : j.at("states")) {
        StateNode s;
        s.name = js.at("name").get<std::string>();
        s.state_type = state_type_from_string(js.at("type").get<std::string>());
        s.objective = js.at("objective").get<std::string>();
        for (const auto& gl : js.at("guidelines")) s.guidelines.push_back(gl.get<std::string>());
        if (g.has_state(s.name)) throw GraphError("duplicate-state-name: " + s.name);
        if (s.objective.empty()) throw GraphError("empty objective for state " + s.name);
        g.states_.push_back(std::move(s));
    }
    for (const auto& je : j.at("edges")) {
        TransitionEdge e;
        e.from = je.at("from").get<std::string>();
        e.to = je.at("to").get<std::string>();
        e.condition = je.at("condition").get<std::string>();
        if (!g.has_state(e.from) || !g.has_state(e.to)) {
            throw GraphError("dangling-edge: " + e.from + " -> " + e.to);
        }
        if (g.has_edge(e.from, e.to)) throw GraphError("duplicate-edge: " + e.from + " -> " + e.to);
        g.edges_.push_back(std::move(e));
    }
    g.current_ = j.at("initial").get<std::string>();
    if (!g.has_state(g.current_)) throw GraphError("initial state not in graph: " + g.current_);
    return g;
}

}  // namespace blicket
