#include "blicket/behavior.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

namespace blicket {

const char* to_string(BehaviorId id) {
    switch (id) {
        case BehaviorId::exploration_stagnation: return "exploration_stagnation";
        case BehaviorId::order_hypothesis: return "order_hypothesis";
        case BehaviorId::stochasticity_hypothesis: return "stochasticity_hypothesis";
        case BehaviorId::rule_change_hypothesis: return "rule_change_hypothesis";
    }
    return "?";
}

BehaviorId behavior_id_from_string(const std::string& s) {
    if (s == "exploration_stagnation") return BehaviorId::exploration_stagnation;
    if (s == "order_hypothesis") return BehaviorId::order_hypothesis;
    if (s == "stochasticity_hypothesis") return BehaviorId::stochasticity_hypothesis;
    if (s == "rule_change_hypothesis") return BehaviorId::rule_change_hypothesis;
    throw BehaviorError("unknown behavior id: " + s);
}

std::vector<std::string> BehaviorSpec::validate() const {
    std::vector<std::string> v;
    if (min_steps < 1) v.push_back("min_steps must be >= 1");
    if (fire_threshold < 0.0 || fire_threshold > 10.0) v.push_back("fire_threshold must lie in [0, 10]");
    if (stagnation_threshold && *stagnation_threshold < 1) v.push_back("stagnation_threshold must be >= 1");
    if (notification.empty()) v.push_back("notification text must be non-empty");
    return v;
}

std::vector<BehaviorSpec> default_behaviors() {
    std::vector<BehaviorSpec> out;

    {
        BehaviorSpec db1;
        db1.id = BehaviorId::exploration_stagnation;
        db1.min_steps = 6;
        db1.requires_never_activated = true;
        db1.stagnation_threshold = 6;
        db1.evaluation_prompt =
            "The agent has been exploring the detector for several steps but has NEVER achieved "
            "activation. Are they stuck in an ineffective exploration pattern? Consider whether they "
            "need to think about alternative causal mechanisms beyond simple conjunctive/disjunctive "
            "rules.";
        db1.graph_patch.source_behavior = to_string(db1.id);
        db1.graph_patch.new_states = {
            {"DIMENSION_DISCOVERY",
             StateType::reflection,
             "Consider alternative causal dimensions: placement order, probabilistic activation, and "
             "rules that change over time.",
             {"Review the evidence for patterns standard rules cannot produce",
              "Design tests that vary one dimension at a time",
              "Return to combination testing once a new dimension looks promising"},
             std::nullopt}};
        db1.graph_patch.new_edges = {
            {"HYPOTHESIS_EVALUATION", "DIMENSION_DISCOVERY", "If observations do not fit standard causal rules"},
            {"COMBINATION_TESTING", "DIMENSION_DISCOVERY", "If nothing tested so far activates the detector"},
            {"DIMENSION_DISCOVERY", "COMBINATION_TESTING", "To test a new causal dimension"},
            {"DIMENSION_DISCOVERY", "VERIFICATION", "If one alternative dimension explains the evidence"},
        };
        db1.notification =
            "[SYSTEM] Your observations don't fit standard causal rules. A new exploration state "
            "DIMENSION_DISCOVERY is now available. Consider transitioning there to explore alternative "
            "causal dimensions.";
        out.push_back(std::move(db1));
    }

    {
        BehaviorSpec db2;
        db2.id = BehaviorId::order_hypothesis;
        db2.min_steps = 8;
        db2.evaluation_prompt =
            "Has the agent observed inconsistent or surprising results that could be explained by the "
            "ORDER or SEQUENCE of object placement mattering? For example: the same set of objects "
            "producing different results, or configurations that 'should' work based on object identity "
            "alone failing to activate.";
        db2.graph_patch.source_behavior = to_string(db2.id);
        db2.graph_patch.new_states = {
            {"ORDER_TESTING",
             StateType::action,
             "Systematically vary placement order while keeping the same objects.",
             {"Pick a fixed object set and test each placement sequence",
              "Record which sequences activate the detector and which do not",
              "Compare sequences that differ by a single swap"},
             std::nullopt}};
        db2.graph_patch.new_edges = {
            {"DIMENSION_DISCOVERY", "ORDER_TESTING", "If placement order could explain the evidence"},
            {"COMBINATION_TESTING", "ORDER_TESTING", "If the same objects behave differently across tests"},
            {"ORDER_TESTING", "HYPOTHESIS_EVALUATION", "After comparing placement sequences"},
            {"ORDER_TESTING", "VERIFICATION", "If one ordering rule explains all observations"},
        };
        db2.notification =
            "[SYSTEM] Evidence suggests placement order may matter. A new ORDER_TESTING state is "
            "available for systematic order experiments.";
        out.push_back(std::move(db2));
    }

    {
        BehaviorSpec db3;
        db3.id = BehaviorId::stochasticity_hypothesis;
        db3.min_steps = 8;
        db3.evaluation_prompt =
            "Has the agent tried the EXACT same configuration of objects MORE THAN ONCE and gotten "
            "DIFFERENT results? This would suggest probabilistic/stochastic activation rather than a "
            "deterministic rule.";
        db3.graph_patch.source_behavior = to_string(db3.id);
        db3.graph_patch.new_states = {
            {"RELIABILITY_TESTING",
             StateType::action,
             "Repeat the same configuration multiple times and estimate activation probability.",
             {"Re-test one configuration without changing anything",
              "Count activations across repetitions",
              "Judge whether failures look random or systematic"},
             std::nullopt}};
        db3.graph_patch.new_edges = {
            {"DIMENSION_DISCOVERY", "RELIABILITY_TESTING", "If activation looks probabilistic"},
            {"COMBINATION_TESTING", "RELIABILITY_TESTING", "If identical configurations gave different results"},
            {"RELIABILITY_TESTING", "HYPOTHESIS_EVALUATION", "After estimating activation reliability"},
        };
        db3.notification =
            "[SYSTEM] Inconsistent results detected for same configurations. A new RELIABILITY_TESTING "
            "state is available to measure activation probability.";
        out.push_back(std::move(db3));
    }

    {
        BehaviorSpec db4;
        db4.id = BehaviorId::rule_change_hypothesis;
        db4.min_steps = 10;
        db4.evaluation_prompt =
            "Has the agent found a rule that WORKED CONSISTENTLY for several trials but then STOPPED "
            "working? The same objects that reliably activated the detector no longer do so, suggesting "
            "the underlying rule has changed.";
        db4.graph_patch.source_behavior = to_string(db4.id);
        db4.graph_patch.new_states = {
            {"MODERATOR_DETECTION",
             StateType::reflection,
             "The causal rule appears to have changed. Investigate what triggers rule changes and "
             "identify the new rule.",
             {"Count how many successful activations preceded the change",
              "Re-test all objects individually under the new regime",
              "Re-test combinations that used to work",
              "Consider whether the rule cycles or switched permanently"},
             std::nullopt}};
        db4.graph_patch.new_edges = {
            {"DIMENSION_DISCOVERY", "MODERATOR_DETECTION", "If a previously reliable rule stopped working"},
            {"HYPOTHESIS_EVALUATION", "MODERATOR_DETECTION", "If confirmed evidence has become contradictory"},
            {"MODERATOR_DETECTION", "COMBINATION_TESTING", "To re-test configurations under the new regime"},
            {"MODERATOR_DETECTION", "VERIFICATION", "If the new rule has been identified"},
        };
        db4.notification =
            "[SYSTEM] The causal rule appears to have changed. A new MODERATOR_DETECTION state is "
            "available to investigate rule shifts.";
        out.push_back(std::move(db4));
    }

    return out;
}

bool prescreen(const BehaviorSpec& spec, const EpisodeSnapshot& snapshot,
               const std::set<BehaviorId>& fired) {
    if (snapshot.steps_used < spec.min_steps) return false;
    if (fired.count(spec.id)) return false;
    if (spec.requires_never_activated && snapshot.activation_count != 0) return false;
    if (spec.stagnation_threshold) {
        const int steps_since = snapshot.activation_count == 0
                                    ? snapshot.steps_used
                                    : snapshot.steps_used - snapshot.last_activation_step;
        if (steps_since < *spec.stagnation_threshold) return false;
    }
    return true;
}

namespace {

constexpr std::size_t kMaxMessages = 5;
constexpr std::size_t kMaxMessageChars = 300;

std::string config_key(const std::vector<char>& ordering) {
    return std::string(ordering.begin(), ordering.end());
}

std::string set_key(const std::vector<char>& ordering) {
    std::string s(ordering.begin(), ordering.end());
    std::sort(s.begin(), s.end());
    return s;
}

}  // namespace

CondensedContext condense(const std::vector<Message>& history, const std::string& current_state,
                          const TraceFeatures& features) {
    CondensedContext ctx;
    const std::size_t start = history.size() > kMaxMessages ? history.size() - kMaxMessages : 0;
    for (std::size_t i = start; i < history.size(); ++i) {
        Message m = history[i];
        if (m.content.size() > kMaxMessageChars) m.content.resize(kMaxMessageChars);
        ctx.recent_messages.push_back(std::move(m));
    }
    ctx.current_state = current_state;

    std::set<std::string> unique;
    for (const auto& e : features.evaluations) unique.insert(config_key(e.ordering));
    std::ostringstream summary;
    summary << unique.size() << " unique configurations tested across " << features.evaluations.size()
            << " evaluations; " << features.activation_count << " activations";
    if (features.activation_count == 0) {
        summary << "; never activated.";
    } else {
        summary << "; last activation " << (features.steps_used - features.last_activation_step)
                << " steps ago.";
    }
    if (!features.evaluations.empty()) {
        summary << " Recent:";
        const std::size_t tail = features.evaluations.size() > 6 ? features.evaluations.size() - 6 : 0;
        for (std::size_t i = tail; i < features.evaluations.size(); ++i) {
            const auto& e = features.evaluations[i];
            summary << (i == tail ? " " : ", ") << (e.ordering.empty() ? "(empty)" : config_key(e.ordering))
                    << "=" << to_string(e.outcome);
        }
    }
    ctx.exploration_summary = summary.str();
    return ctx;
}

double heuristic_evaluate(BehaviorId id, const BehaviorSpec& spec, const TraceFeatures& f) {
    switch (id) {
        case BehaviorId::exploration_stagnation: {
            const int threshold = spec.stagnation_threshold.value_or(spec.min_steps);
            return (f.activation_count == 0 && f.steps_used >= threshold) ? 9.0 : 0.0;
        }
        case BehaviorId::order_hypothesis: {
            // same object set under >= 2 distinct orderings with differing outcomes
            std::map<std::string, std::map<std::string, std::set<DetectorStatus>>> by_set;
            for (const auto& e : f.evaluations) {
                by_set[set_key(e.ordering)][config_key(e.ordering)].insert(e.outcome);
            }
            for (const auto& [set_k, orderings] : by_set) {
                if (orderings.size() < 2) continue;
                std::set<DetectorStatus> all;
                for (const auto& [ord_k, outcomes] : orderings) all.insert(outcomes.begin(), outcomes.end());
                if (all.size() > 1) return 9.0;
            }
            return 0.0;
        }
        case BehaviorId::stochasticity_hypothesis: {
            // identical (set, ordering) configuration with differing outcomes
            std::map<std::string, std::set<DetectorStatus>> by_config;
            for (const auto& e : f.evaluations) by_config[config_key(e.ordering)].insert(e.outcome);
            for (const auto& [k, outcomes] : by_config) {
                if (outcomes.size() > 1) return 9.0;
            }
            return 0.0;
        }
        case BehaviorId::rule_change_hypothesis: {
            // a configuration ACTIVE on >= 2 evaluations, later INACTIVE on the
            // same configuration
            std::map<std::string, int> active_so_far;
            for (const auto& e : f.evaluations) {
                const std::string k = config_key(e.ordering);
                if (e.outcome == DetectorStatus::active) {
                    ++active_so_far[k];
                } else if (active_so_far[k] >= 2) {
                    return 9.0;
                }
            }
            return 0.0;
        }
    }
    return 0.0;
}

std::optional<double> HeuristicEvaluator::score(const BehaviorSpec& spec, const CondensedContext&,
                                                const TraceFeatures& features, std::string&) {
    return heuristic_evaluate(spec.id, spec, features);
}

std::vector<FiringDecision> resolve_firings(const std::vector<std::pair<BehaviorId, double>>& candidates,
                                            const std::vector<BehaviorSpec>& specs, double margin) {
    std::vector<std::pair<BehaviorId, double>> eligible;
    for (const auto& [id, score] : candidates) {
        const auto it = std::find_if(specs.begin(), specs.end(),
                                     [&](const BehaviorSpec& s) { return s.id == id; });
        if (it == specs.end()) throw BehaviorError(std::string("no spec for behavior ") + to_string(id));
        if (score >= it->fire_threshold) eligible.emplace_back(id, score);
    }
    std::sort(eligible.begin(), eligible.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return static_cast<int>(a.first) < static_cast<int>(b.first);
    });
    std::vector<FiringDecision> out;
    if (eligible.empty()) return out;
    out.push_back({eligible[0].first, eligible[0].second, false});
    if (eligible.size() > 1 && eligible[0].second - eligible[1].second <= margin) {
        out.push_back({eligible[1].first, eligible[1].second, true});
    }
    return out;
}

MonitorState::MonitorState(std::vector<BehaviorSpec> behaviors, double inhibition_margin)
    : behaviors_(std::move(behaviors)), margin_(inhibition_margin) {
    for (const auto& b : behaviors_) {
        auto violations = b.validate();
        if (!violations.empty()) throw BehaviorError("invalid behavior spec: " + violations.front());
    }
}

const BehaviorSpec& MonitorState::spec_for(BehaviorId id) const {
    for (const auto& b : behaviors_) {
        if (b.id == id) return b;
    }
    throw BehaviorError(std::string("no spec for behavior ") + to_string(id));
}

void MonitorState::fire(BehaviorId id, ContextGraph& graph, int step,
                        std::vector<Notification>& out_notifications) {
    if (fired_.count(id)) throw BehaviorError(std::string("already-fired: ") + to_string(id));
    const BehaviorSpec& spec = spec_for(id);

    // Patches reference states that other behaviors add; drop edges whose
    // endpoints are not present yet so the patch applies cleanly.
    GraphModification patch;
    patch.source_behavior = spec.graph_patch.source_behavior;
    patch.new_states = spec.graph_patch.new_states;
    auto will_exist = [&](const std::string& name) {
        if (graph.has_state(name)) return true;
        return std::any_of(patch.new_states.begin(), patch.new_states.end(),
                           [&](const StateNode& s) { return s.name == name; });
    };
    for (const auto& e : spec.graph_patch.new_edges) {
        if (will_exist(e.from) && will_exist(e.to) && !graph.has_edge(e.from, e.to)) {
            patch.new_edges.push_back(e);
        }
    }
    graph.apply_modification(patch, step);
    out_notifications.push_back({id, spec.notification});
    fired_.insert(id);
}

std::vector<TriggerEvaluation> MonitorState::on_step(int step, const EpisodeSnapshot& snapshot,
                                                     const CondensedContext& ctx,
                                                     const TraceFeatures& features,
                                                     TriggerEvaluator& evaluator, ContextGraph& graph,
                                                     std::vector<Notification>& out_notifications) {
    std::vector<TriggerEvaluation> step_evals;
    std::vector<std::pair<BehaviorId, double>> candidates;

    for (const auto& spec : behaviors_) {
        if (fired_.count(spec.id)) continue;
        TriggerEvaluation eval;
        eval.behavior_id = spec.id;
        eval.step = step;
        eval.prescreen_passed = prescreen(spec, snapshot, fired_);
        if (eval.prescreen_passed) {
            std::string error;
            const auto score = evaluator.score(spec, ctx, features, error);
            if (score) {
                // out-of-range scores clamp to [0, 10]
                eval.score = std::clamp(*score, 0.0, 10.0);
                candidates.emplace_back(spec.id, *eval.score);
            } else {
                eval.error = error.empty() ? "evaluator-unavailable" : error;
            }
        }
        step_evals.push_back(std::move(eval));
    }

    // synchronous barrier: no firing until every score for the step is in
    const auto decisions = resolve_firings(candidates, behaviors_, margin_);
    for (const auto& d : decisions) {
        fire(d.id, graph, step, out_notifications);
        for (auto& eval : step_evals) {
            if (eval.behavior_id == d.id) {
                eval.fired = true;
                eval.runner_up = d.runner_up;
            }
        }
    }
    evaluations_.insert(evaluations_.end(), step_evals.begin(), step_evals.end());
    return step_evals;
}

namespace {

StateNode state_from_json(const nlohmann::json& js) {
    StateNode s;
    s.name = js.at("name").get<std::string>();
    s.state_type = state_type_from_string(js.at("type").get<std::string>());
    s.objective = js.at("objective").get<std::string>();
    for (const auto& g : js.at("guidelines")) s.guidelines.push_back(g.get<std::string>());
    return s;
}

}  // namespace

std::vector<BehaviorSpec> behaviors_from_json(const nlohmann::json& j) {
    std::vector<BehaviorSpec> out;
    for (const auto& jb : j.at("behaviors")) {
        BehaviorSpec b;
        b.id = behavior_id_from_string(jb.at("id").get<std::string>());
        b.min_steps = jb.at("min_steps").get<int>();
        b.requires_never_activated = jb.value("requires_never_activated", false);
        if (jb.contains("stagnation_threshold")) {
            b.stagnation_threshold = jb.at("stagnation_threshold").get<int>();
        }
        b.fire_threshold = jb.at("fire_threshold").get<double>();
        b.evaluation_prompt = jb.at("evaluation_prompt").get<std::string>();
        b.notification = jb.at("notification").get<std::string>();
        b.graph_patch.source_behavior = to_string(b.id);
        for (const auto& js : jb.at("new_states")) b.graph_patch.new_states.push_back(state_from_json(js));
        for (const auto& je : jb.at("new_edges")) {
            b.graph_patch.new_edges.push_back({je.at("from").get<std::string>(),
                                               je.at("to").get<std::string>(),
                                               je.at("condition").get<std::string>()});
        }
        auto violations = b.validate();
        if (!violations.empty()) throw BehaviorError("invalid behavior spec: " + violations.front());
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace blicket
