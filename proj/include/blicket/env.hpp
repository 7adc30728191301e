#pragma once
// Blicket detector environment: hidden rule regimes, place/remove/check
// actions, step budget, silent rule switching, and answer grading.

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "blicket/rng.hpp"

namespace blicket {

using ObjectSet = std::set<char>;

enum class Condition {
    conjunctive,
    disjunctive,
    order_sensitive,
    stochastic,
    hidden_moderator,
};

enum class RuleType { conjunctive, disjunctive };
enum class DetectorStatus { inactive, active };
enum class ActionKind { place, remove, check, noop };
enum class ObjectSetError { none, over_inclusion, under_inclusion, mixed };

const char* to_string(Condition c);
const char* to_string(RuleType t);
const char* to_string(DetectorStatus s);
const char* to_string(ActionKind k);
const char* to_string(ObjectSetError e);
Condition condition_from_string(const std::string& s);
RuleType rule_type_from_string(const std::string& s);

// object ids are single uppercase letters starting at 'A'
std::vector<char> object_names(int count);

struct Answer {
    RuleType rule_type = RuleType::conjunctive;
    ObjectSet claimed_blickets;
    bool operator==(const Answer&) const = default;
};

struct Action {
    ActionKind kind = ActionKind::noop;
    char object = 0;               // place / remove
    std::optional<Answer> answer;  // check

    static Action place(char o) { return {ActionKind::place, o, std::nullopt}; }
    static Action remove(char o) { return {ActionKind::remove, o, std::nullopt}; }
    static Action check(Answer a) { return {ActionKind::check, 0, std::move(a)}; }
    static Action noop() { return {}; }
    bool operator==(const Action&) const = default;
};

struct RuleSpec {
    RuleType rule_type = RuleType::conjunctive;
    ObjectSet active_blickets;
    std::optional<std::vector<char>> order_constraint;
    std::optional<double> activation_probability;

    std::vector<std::string> validate() const;
    bool operator==(const RuleSpec&) const = default;
};

struct PostSwitchRule {
    RuleType rule_type = RuleType::disjunctive;
    ObjectSet blickets;
    bool operator==(const PostSwitchRule&) const = default;
};

struct EpisodeConfig {
    Condition condition = Condition::conjunctive;
    int object_count = 5;
    ObjectSet blickets;
    ObjectSet distractors;
    std::optional<std::vector<char>> order_constraint;     // order_sensitive only
    std::optional<double> activation_probability;          // stochastic only
    std::optional<int> switch_point;                       // hidden_moderator only
    std::optional<PostSwitchRule> post_switch_rule;        // hidden_moderator only
    int step_budget = 75;
    std::uint64_t seed = 0;

    std::vector<std::string> validate() const;  // empty list = valid
    RuleSpec initial_rule() const;
    ObjectSet object_set() const;
    bool operator==(const EpisodeConfig&) const = default;
};

// (object, 1-based index of the action that placed it); list order = placement order
struct Placement {
    char object = 0;
    int step = 0;
    bool operator==(const Placement&) const = default;
};

struct Observation {
    DetectorStatus detector = DetectorStatus::inactive;
    int steps_remaining = 0;
    bool terminated = false;
    bool operator==(const Observation&) const = default;
};

struct Verdict {
    bool correct = false;
    bool rule_type_error = false;
    ObjectSetError object_set_error = ObjectSetError::none;
    RuleSpec graded_against;
    bool operator==(const Verdict&) const = default;
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const { return violations_; }

private:
    std::vector<std::string> violations_;
};

class EnvError : public std::runtime_error {
public:
    explicit EnvError(const std::string& what) : std::runtime_error(what) {}
};

// Pure rule evaluation. Deterministic rules never consume rng draws; a
// stochastic rule draws once per evaluation, and only when the base
// configuration is satisfied.
DetectorStatus evaluate_rule(const RuleSpec& rule, const std::vector<Placement>& placement, Rng& rng);

// Grades against the given rule: correct iff rule type matches and the
// claimed set equals the active set exactly.
Verdict grade_answer(const RuleSpec& truth, const Answer& answer);

// One episode. Construction validates the config and throws ConfigError
// with the violated invariants.
class Environment {
public:
    explicit Environment(EpisodeConfig config);

    // Consumes exactly one budget step for every action kind, including
    // noop and check. check terminates the episode and stores the verdict,
    // graded against the rule in force after this step's activation
    // accounting (the switch, if triggered by this very step, has already
    // been applied).
    Observation step(const Action& action);

    const EpisodeConfig& config() const { return config_; }
    const RuleSpec& current_rule() const { return current_rule_; }
    const std::vector<Placement>& placement() const { return placement_; }
    int steps_used() const { return steps_used_; }
    int activation_count() const { return activation_count_; }
    int last_activation_step() const { return last_activation_step_; }  // 0 = never
    bool switched() const { return switched_; }
    bool terminated() const { return terminated_; }
    const std::optional<Answer>& submitted_answer() const { return answer_; }
    const std::optional<Verdict>& verdict() const { return verdict_; }

private:
    EpisodeConfig config_;
    RuleSpec current_rule_;
    std::vector<Placement> placement_;
    int steps_used_ = 0;
    int activation_count_ = 0;
    int last_activation_step_ = 0;
    bool switched_ = false;
    bool terminated_ = false;
    std::optional<Answer> answer_;
    std::optional<Verdict> verdict_;
    Rng rng_;
};

Verdict grade_answer(const Environment& env, const Answer& answer);

// Condition-default parameter table, shipped as configs/conditions.json.
struct ConditionDefaults {
    std::string version = "1";
    // step budgets: standard conditions use one budget for all counts;
    // extended conditions are keyed by object count
    int standard_budget = 50;
    int extended_budget_3 = 50;
    int extended_budget_4 = 100;
    int extended_budget_5 = 75;
    int conjunctive_blickets = 2;
    int disjunctive_blickets = 1;
    double activation_probability = 0.70;
    int switch_point = 3;
    double fire_threshold = 6.0;
    double inhibition_margin = 1.0;

    int budget_for(Condition c, int object_count) const;
    static ConditionDefaults builtin();
    bool operator==(const ConditionDefaults&) const = default;
};

// How assign_roles builds the hidden-moderator post-switch rule.
enum class PostRuleKind {
    easy_disjunctive,         // disjunctive singleton drawn from the distractors
    hard_conjunctive_triple,  // conjunctive rule over all three distractors (5-object)
};

struct RoleOptions {
    PostRuleKind post_rule = PostRuleKind::easy_disjunctive;
    std::optional<int> switch_point;
    std::optional<int> step_budget;
    ConditionDefaults defaults = ConditionDefaults::builtin();
};

// Deterministic in seed; samples blicket/distractor roles uniformly over the
// valid assignments and fills condition defaults.
EpisodeConfig assign_roles(Condition condition, int object_count, std::uint64_t seed);
EpisodeConfig assign_roles(Condition condition, int object_count, std::uint64_t seed, const RoleOptions& options);

}  // namespace blicket
