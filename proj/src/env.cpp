#include "blicket/env.hpp"

#include <algorithm>
#include <sstream>

namespace blicket {

const char* to_string(Condition c) {
    switch (c) {
        case Condition::conjunctive: return "conjunctive";
        case Condition::disjunctive: return "disjunctive";
        case Condition::order_sensitive: return "order_sensitive";
        case Condition::stochastic: return "stochastic";
        case Condition::hidden_moderator: return "hidden_moderator";
    }
    return "?";
}

const char* to_string(RuleType t) {
    return t == RuleType::conjunctive ? "conjunctive" : "disjunctive";
}

const char* to_string(DetectorStatus s) {
    return s == DetectorStatus::active ? "ACTIVE" : "INACTIVE";
}

const char* to_string(ActionKind k) {
    switch (k) {
        case ActionKind::place: return "place";
        case ActionKind::remove: return "remove";
        case ActionKind::check: return "check";
        case ActionKind::noop: return "noop";
    }
    return "?";
}

const char* to_string(ObjectSetError e) {
    switch (e) {
        case ObjectSetError::none: return "none";
        case ObjectSetError::over_inclusion: return "over_inclusion";
        case ObjectSetError::under_inclusion: return "under_inclusion";
        case ObjectSetError::mixed: return "mixed";
    }
    return "?";
}

Condition condition_from_string(const std::string& s) {
    if (s == "conjunctive") return Condition::conjunctive;
    if (s == "disjunctive") return Condition::disjunctive;
    if (s == "order_sensitive") return Condition::order_sensitive;
    if (s == "stochastic") return Condition::stochastic;
    if (s == "hidden_moderator") return Condition::hidden_moderator;
    throw ConfigError({"unknown condition name: " + s});
}

RuleType rule_type_from_string(const std::string& s) {
    if (s == "conjunctive") return RuleType::conjunctive;
    if (s == "disjunctive") return RuleType::disjunctive;
    throw ConfigError({"unknown rule type: " + s});
}

std::vector<char> object_names(int count) {
    std::vector<char> out;
    for (int i = 0; i < count; ++i) out.push_back(static_cast<char>('A' + i));
    return out;
}

namespace {

bool is_subset(const ObjectSet& sub, const ObjectSet& super) {
    return std::includes(super.begin(), super.end(), sub.begin(), sub.end());
}

bool intersects(const ObjectSet& a, const ObjectSet& b) {
    for (char x : a) {
        if (b.count(x)) return true;
    }
    return false;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error("invalid-config: " + join(violations, "; ")), violations_(std::move(violations)) {}

std::vector<std::string> RuleSpec::validate() const {
    std::vector<std::string> v;
    if (active_blickets.empty()) v.push_back("active_blickets must be non-empty");
    if (order_constraint) {
        ObjectSet constrained(order_constraint->begin(), order_constraint->end());
        if (constrained.size() != order_constraint->size() || constrained != active_blickets) {
            v.push_back("order_constraint must be a permutation of active_blickets");
        }
    }
    if (activation_probability && (*activation_probability <= 0.0 || *activation_probability > 1.0)) {
        v.push_back("activation_probability must lie in (0, 1]");
    }
    return v;
}

ObjectSet EpisodeConfig::object_set() const {
    ObjectSet all = blickets;
    all.insert(distractors.begin(), distractors.end());
    return all;
}

std::vector<std::string> EpisodeConfig::validate() const {
    std::vector<std::string> v;
    if (object_count < 3 || object_count > 5) v.push_back("object_count must be 3, 4, or 5");
    const auto names = object_names(object_count);
    const ObjectSet expected(names.begin(), names.end());
    if (object_set() != expected) v.push_back("blickets and distractors must partition the object set");
    if (intersects(blickets, distractors)) v.push_back("blickets and distractors must be disjoint");
    if (blickets.empty()) v.push_back("blickets must be non-empty");
    if (order_constraint.has_value() != (condition == Condition::order_sensitive)) {
        v.push_back("order_constraint present iff condition is order_sensitive");
    }
    if (order_constraint) {
        ObjectSet constrained(order_constraint->begin(), order_constraint->end());
        if (constrained.size() != order_constraint->size() || constrained != blickets) {
            v.push_back("order_constraint must be a permutation of the blicket set");
        }
    }
    if (activation_probability.has_value() != (condition == Condition::stochastic)) {
        v.push_back("activation_probability present iff condition is stochastic");
    }
    if (activation_probability && (*activation_probability <= 0.0 || *activation_probability > 1.0)) {
        v.push_back("activation_probability must lie in (0, 1]");
    }
    if (switch_point.has_value() != (condition == Condition::hidden_moderator)) {
        v.push_back("switch_point present iff condition is hidden_moderator");
    }
    if (switch_point && *switch_point < 1) v.push_back("switch_point must be >= 1");
    if (post_switch_rule.has_value() != (condition == Condition::hidden_moderator)) {
        v.push_back("post_switch_rule present iff condition is hidden_moderator");
    }
    if (post_switch_rule) {
        if (post_switch_rule->blickets.empty()) v.push_back("post_switch_rule.blickets must be non-empty");
        if (!is_subset(post_switch_rule->blickets, expected)) {
            v.push_back("post_switch_rule.blickets must be a subset of the object set");
        }
    }
    if (step_budget < 1) v.push_back("step_budget must be >= 1");
    return v;
}

RuleSpec EpisodeConfig::initial_rule() const {
    RuleSpec rule;
    rule.active_blickets = blickets;
    switch (condition) {
        case Condition::conjunctive:
            rule.rule_type = RuleType::conjunctive;
            break;
        case Condition::disjunctive:
            rule.rule_type = RuleType::disjunctive;
            break;
        case Condition::order_sensitive:
            rule.rule_type = RuleType::conjunctive;
            rule.order_constraint = order_constraint;
            break;
        case Condition::stochastic:
            rule.rule_type = RuleType::conjunctive;
            rule.activation_probability = activation_probability;
            break;
        case Condition::hidden_moderator:
            // pre-switch regime is conjunctive over the configured blickets
            rule.rule_type = RuleType::conjunctive;
            break;
    }
    return rule;
}

DetectorStatus evaluate_rule(const RuleSpec& rule, const std::vector<Placement>& placement, Rng& rng) {
    ObjectSet present;
    for (const auto& p : placement) present.insert(p.object);

    bool satisfied = rule.rule_type == RuleType::conjunctive
                         ? is_subset(rule.active_blickets, present)
                         : intersects(rule.active_blickets, present);

    if (satisfied && rule.order_constraint) {
        // relative order of the constrained blickets by placement position;
        // interleaved distractors do not break it
        std::vector<char> observed;
        for (const auto& p : placement) {
            if (rule.active_blickets.count(p.object)) observed.push_back(p.object);
        }
        satisfied = observed == *rule.order_constraint;
    }

    if (!satisfied) return DetectorStatus::inactive;
    if (rule.activation_probability) {
        return rng.bernoulli(*rule.activation_probability) ? DetectorStatus::active
                                                           : DetectorStatus::inactive;
    }
    return DetectorStatus::active;
}

Verdict grade_answer(const RuleSpec& truth, const Answer& answer) {
    Verdict v;
    v.graded_against = truth;
    v.rule_type_error = answer.rule_type != truth.rule_type;
    const ObjectSet& t = truth.active_blickets;
    const ObjectSet& c = answer.claimed_blickets;
    if (c == t) {
        v.object_set_error = ObjectSetError::none;
    } else if (is_subset(t, c)) {
        v.object_set_error = ObjectSetError::over_inclusion;
    } else if (is_subset(c, t)) {
        v.object_set_error = ObjectSetError::under_inclusion;
    } else {
        v.object_set_error = ObjectSetError::mixed;
    }
    v.correct = !v.rule_type_error && v.object_set_error == ObjectSetError::none;
    return v;
}

Verdict grade_answer(const Environment& env, const Answer& answer) {
    return grade_answer(env.current_rule(), answer);
}

Environment::Environment(EpisodeConfig config)
    : config_(std::move(config)), rng_(config_.seed) {
    auto violations = config_.validate();
    if (!violations.empty()) throw ConfigError(std::move(violations));
    current_rule_ = config_.initial_rule();
}

Observation Environment::step(const Action& action) {
    if (terminated_) throw EnvError("episode-terminated");
    if (steps_used_ >= config_.step_budget) throw EnvError("step-budget-exhausted");

    const ObjectSet objects = config_.object_set();
    switch (action.kind) {
        case ActionKind::place: {
            if (!objects.count(action.object)) throw EnvError(std::string("unknown-object: ") + action.object);
            const bool present = std::any_of(placement_.begin(), placement_.end(),
                                             [&](const Placement& p) { return p.object == action.object; });
            // re-placing a present object is a consumed no-op
            if (!present) placement_.push_back({action.object, steps_used_ + 1});
            break;
        }
        case ActionKind::remove: {
            if (!objects.count(action.object)) throw EnvError(std::string("unknown-object: ") + action.object);
            // removing an absent object is a consumed no-op
            std::erase_if(placement_, [&](const Placement& p) { return p.object == action.object; });
            break;
        }
        case ActionKind::check:
            if (!action.answer) throw EnvError("check without answer");
            break;
        case ActionKind::noop:
            break;
    }

    const DetectorStatus detector = evaluate_rule(current_rule_, placement_, rng_);
    ++steps_used_;
    if (detector == DetectorStatus::active) {
        ++activation_count_;
        last_activation_step_ = steps_used_;
    }
    // The switching observation itself is reported under the pre-switch rule;
    // everything after this point, including grading, sees the new rule.
    if (config_.condition == Condition::hidden_moderator && !switched_ &&
        activation_count_ == *config_.switch_point) {
        current_rule_.rule_type = config_.post_switch_rule->rule_type;
        current_rule_.active_blickets = config_.post_switch_rule->blickets;
        switched_ = true;
    }
    if (action.kind == ActionKind::check) {
        answer_ = *action.answer;
        verdict_ = grade_answer(current_rule_, *action.answer);
        terminated_ = true;
    }
    return {detector, config_.step_budget - steps_used_, terminated_};
}

int ConditionDefaults::budget_for(Condition c, int object_count) const {
    if (c == Condition::conjunctive || c == Condition::disjunctive) return standard_budget;
    switch (object_count) {
        case 3: return extended_budget_3;
        case 4: return extended_budget_4;
        default: return extended_budget_5;
    }
}

ConditionDefaults ConditionDefaults::builtin() { return ConditionDefaults{}; }

namespace {

// index-th k-subset of objects, in lexicographic order
ObjectSet kth_subset(const std::vector<char>& objects, int k, std::uint64_t index) {
    std::vector<int> combo(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) combo[static_cast<std::size_t>(i)] = i;
    for (std::uint64_t step = 0; step < index; ++step) {
        int i = k - 1;
        while (i >= 0 && combo[static_cast<std::size_t>(i)] == static_cast<int>(objects.size()) - k + i) --i;
        if (i < 0) break;
        ++combo[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j) combo[static_cast<std::size_t>(j)] = combo[static_cast<std::size_t>(j - 1)] + 1;
    }
    ObjectSet out;
    for (int i : combo) out.insert(objects[static_cast<std::size_t>(i)]);
    return out;
}

std::uint64_t choose(int n, int k) {
    std::uint64_t r = 1;
    for (int i = 0; i < k; ++i) r = r * static_cast<std::uint64_t>(n - i) / static_cast<std::uint64_t>(i + 1);
    return r;
}

}  // namespace

EpisodeConfig assign_roles(Condition condition, int object_count, std::uint64_t seed) {
    return assign_roles(condition, object_count, seed, RoleOptions{});
}

EpisodeConfig assign_roles(Condition condition, int object_count, std::uint64_t seed, const RoleOptions& options) {
    if (object_count < 3 || object_count > 5) {
        throw ConfigError({"unsupported object_count: " + std::to_string(object_count)});
    }
    const auto objects = object_names(object_count);
    const ConditionDefaults& d = options.defaults;
    Rng rng(seed);

    const int blicket_count = condition == Condition::disjunctive ? d.disjunctive_blickets : d.conjunctive_blickets;
    const ObjectSet blickets = kth_subset(objects, blicket_count, rng.next_below(choose(object_count, blicket_count)));

    EpisodeConfig cfg;
    cfg.condition = condition;
    cfg.object_count = object_count;
    cfg.blickets = blickets;
    for (char o : objects) {
        if (!blickets.count(o)) cfg.distractors.insert(o);
    }
    cfg.seed = seed;
    cfg.step_budget = options.step_budget.value_or(d.budget_for(condition, object_count));

    switch (condition) {
        case Condition::order_sensitive: {
            std::vector<char> order(blickets.begin(), blickets.end());
            rng.shuffle(order);
            cfg.order_constraint = order;
            break;
        }
        case Condition::stochastic:
            cfg.activation_probability = d.activation_probability;
            break;
        case Condition::hidden_moderator: {
            cfg.switch_point = options.switch_point.value_or(d.switch_point);
            std::vector<char> pool(cfg.distractors.begin(), cfg.distractors.end());
            PostSwitchRule post;
            if (options.post_rule == PostRuleKind::hard_conjunctive_triple) {
                post.rule_type = RuleType::conjunctive;
                post.blickets = ObjectSet(pool.begin(), pool.end());
            } else {
                post.rule_type = RuleType::disjunctive;
                post.blickets = {pool[static_cast<std::size_t>(rng.next_below(pool.size()))]};
            }
            cfg.post_switch_rule = post;
            break;
        }
        default:
            break;
    }

    auto violations = cfg.validate();
    if (!violations.empty()) throw ConfigError(std::move(violations));
    return cfg;
}

}  // namespace blicket
