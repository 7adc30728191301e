#pragma once
// Shared fixture builders for the test suites.

#include <filesystem>
#include <random>
#include <string>

#include "blicket/metrics.hpp"
#include "blicket/trace.hpp"

namespace blicket::testing {

struct TraceSpec {
    Tier tier = Tier::base;
    Condition condition = Condition::hidden_moderator;
    int object_count = 5;
    ObjectSet blickets = {'A', 'B'};
    int switch_point = 3;
    PostSwitchRule post = {RuleType::disjunctive, {'C'}};
    int activations = 4;
    int steps = 20;
    int step_budget = 75;
    bool answered = true;
    bool correct = true;
    std::optional<Answer> answer;  // overrides correct/incorrect defaults
    bool db4_fired = false;
    int db4_step = 15;
    double db4_score = 9.0;
    std::uint64_t seed = 7;
    bool aborted = false;
};

// Builds a schema-valid trace: grading is done with the real grader against
// the rule in force at submission, firings are backed by fired evaluations,
// and step indices are consistent.
inline EpisodeTrace build_trace(const TraceSpec& spec) {
    EpisodeTrace t;
    t.config.condition = spec.condition;
    t.config.object_count = spec.object_count;
    t.config.blickets = spec.blickets;
    for (char o : object_names(spec.object_count)) {
        if (!spec.blickets.count(o)) t.config.distractors.insert(o);
    }
    t.config.step_budget = spec.step_budget;
    t.config.seed = spec.seed;
    if (spec.condition == Condition::hidden_moderator) {
        t.config.switch_point = spec.switch_point;
        t.config.post_switch_rule = spec.post;
    } else if (spec.condition == Condition::stochastic) {
        t.config.activation_probability = 0.70;
    } else if (spec.condition == Condition::order_sensitive) {
        t.config.order_constraint = std::vector<char>(spec.blickets.begin(), spec.blickets.end());
    }

    const bool switched = spec.condition == Condition::hidden_moderator &&
                          spec.activations >= spec.switch_point;
    RuleSpec truth = t.config.initial_rule();
    if (switched) {
        truth.rule_type = spec.post.rule_type;
        truth.active_blickets = spec.post.blickets;
        truth.order_constraint.reset();
        truth.activation_probability.reset();
    }

    t.scaffolding.tier = spec.tier;
    t.activation_count_final = spec.activations;
    t.switched = switched;
    t.aborted = spec.aborted;

    for (int i = 1; i <= spec.steps; ++i) {
        StepRecord rec;
        rec.step_index = i;
        rec.prompt_digest = "0000000000000000";
        rec.parsed.parse_ok = true;
        rec.parsed.action_text = "noop";
        rec.action = Action::noop();
        rec.observation = {DetectorStatus::inactive, spec.step_budget - i, false};
        if (spec.tier != Tier::base) rec.cg_state = "COMBINATION_TESTING";
        if (spec.db4_fired && spec.tier == Tier::cg_db && i == spec.db4_step) {
            TriggerEvaluation eval;
            eval.behavior_id = BehaviorId::rule_change_hypothesis;
            eval.step = i;
            eval.prescreen_passed = true;
            eval.score = spec.db4_score;
            eval.fired = true;
            rec.monitor_evaluations.push_back(eval);
            t.firings.push_back({BehaviorId::rule_change_hypothesis, i, spec.db4_score});
        }
        if (spec.answered && i == spec.steps) {
            Answer answer;
            if (spec.answer) {
                answer = *spec.answer;
            } else if (spec.correct) {
                answer = {truth.rule_type, truth.active_blickets};
            } else {
                // the canonical trap answer: pre-switch conjunctive pair
                answer = {RuleType::conjunctive, spec.blickets};
                if (!switched) answer.claimed_blickets = {'E'};  // arbitrary wrong set
            }
            rec.parsed.action_text = "check";
            rec.action = Action::check(answer);
            rec.observation.terminated = true;
            t.final_answer = answer;
            t.verdict = grade_answer(truth, answer);
        }
        t.steps.push_back(std::move(rec));
    }
    return t;
}

inline std::filesystem::path temp_dir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    const auto path = std::filesystem::temp_directory_path() /
                      ("blicket_test_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path);
    return path;
}

}  // namespace blicket::testing
