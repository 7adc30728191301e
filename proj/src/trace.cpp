#include "blicket/trace.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace blicket {

using nlohmann::json;

const char* to_string(Tier t) {
    switch (t) {
        case Tier::base: return "base";
        case Tier::cg: return "cg";
        case Tier::cg_db: return "cg_db";
    }
    return "?";
}

const char* to_string(EvaluatorKind k) {
    return k == EvaluatorKind::heuristic ? "heuristic" : "external";
}

Tier tier_from_string(const std::string& s) {
    if (s == "base") return Tier::base;
    if (s == "cg") return Tier::cg;
    if (s == "cg_db") return Tier::cg_db;
    throw SchemaError("scaffolding.tier", "unknown tier: " + s);
}

EvaluatorKind evaluator_kind_from_string(const std::string& s) {
    if (s == "heuristic") return EvaluatorKind::heuristic;
    if (s == "external") return EvaluatorKind::external;
    throw SchemaError("scaffolding.evaluator", "unknown evaluator kind: " + s);
}

namespace {

std::string set_to_string(const ObjectSet& s) { return std::string(s.begin(), s.end()); }

ObjectSet set_from_string(const std::string& s) { return ObjectSet(s.begin(), s.end()); }

std::string seq_to_string(const std::vector<char>& v) { return std::string(v.begin(), v.end()); }

std::vector<char> seq_from_string(const std::string& s) { return std::vector<char>(s.begin(), s.end()); }

// ---- strict reading helpers ------------------------------------------------

const json& require(const json& j, const char* key, const std::string& path) {
    if (!j.is_object()) throw SchemaError(path, "expected an object");
    const auto it = j.find(key);
    if (it == j.end()) throw SchemaError(path + "." + key, "missing required field");
    return *it;
}

const json* optional_field(const json& j, const char* key) {
    if (!j.is_object()) return nullptr;
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& path,
                bool strict) {
    if (!strict) return;
    for (const auto& [key, value] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; })) {
            throw SchemaError(path + "." + key, "unknown field in strict mode");
        }
    }
}

template <typename T>
T get_as(const json& j, const std::string& path) {
    try {
        return j.get<T>();
    } catch (const json::exception& e) {
        throw SchemaError(path, e.what());
    }
}

// ---- per-type serialization -------------------------------------------------

json rule_spec_to_json(const RuleSpec& r) {
    json j;
    j["rule_type"] = to_string(r.rule_type);
    j["blickets"] = set_to_string(r.active_blickets);
    if (r.order_constraint) j["order_constraint"] = seq_to_string(*r.order_constraint);
    if (r.activation_probability) j["activation_probability"] = *r.activation_probability;
    return j;
}

RuleSpec rule_spec_from_json(const json& j, const std::string& path, bool strict) {
    check_keys(j, {"rule_type", "blickets", "order_constraint", "activation_probability"}, path, strict);
    RuleSpec r;
    r.rule_type = rule_type_from_string(get_as<std::string>(require(j, "rule_type", path), path + ".rule_type"));
    r.active_blickets = set_from_string(get_as<std::string>(require(j, "blickets", path), path + ".blickets"));
    if (const auto* oc = optional_field(j, "order_constraint")) {
        r.order_constraint = seq_from_string(get_as<std::string>(*oc, path + ".order_constraint"));
    }
    if (const auto* ap = optional_field(j, "activation_probability")) {
        r.activation_probability = get_as<double>(*ap, path + ".activation_probability");
    }
    return r;
}

json config_to_json(const EpisodeConfig& c) {
    json j;
    j["condition"] = to_string(c.condition);
    j["object_count"] = c.object_count;
    j["blickets"] = set_to_string(c.blickets);
    j["distractors"] = set_to_string(c.distractors);
    if (c.order_constraint) j["order_constraint"] = seq_to_string(*c.order_constraint);
    if (c.activation_probability) j["activation_probability"] = *c.activation_probability;
    if (c.switch_point) j["switch_point"] = *c.switch_point;
    if (c.post_switch_rule) {
        j["post_switch_rule"] = {{"rule_type", to_string(c.post_switch_rule->rule_type)},
                                 {"blickets", set_to_string(c.post_switch_rule->blickets)}};
    }
    j["step_budget"] = c.step_budget;
    j["seed"] = c.seed;
    return j;
}

EpisodeConfig config_from_json(const json& j, const std::string& path, bool strict) {
    check_keys(j,
               {"condition", "object_count", "blickets", "distractors", "order_constraint",
                "activation_probability", "switch_point", "post_switch_rule", "step_budget", "seed"},
               path, strict);
    EpisodeConfig c;
    c.condition = condition_from_string(
        get_as<std::string>(require(j, "condition", path), path + ".condition"));
    c.object_count = get_as<int>(require(j, "object_count", path), path + ".object_count");
    c.blickets = set_from_string(get_as<std::string>(require(j, "blickets", path), path + ".blickets"));
    c.distractors =
        set_from_string(get_as<std::string>(require(j, "distractors", path), path + ".distractors"));
    if (const auto* oc = optional_field(j, "order_constraint")) {
        c.order_constraint = seq_from_string(get_as<std::string>(*oc, path + ".order_constraint"));
    }
    if (const auto* ap = optional_field(j, "activation_probability")) {
        c.activation_probability = get_as<double>(*ap, path + ".activation_probability");
    }
    if (const auto* sp = optional_field(j, "switch_point")) {
        c.switch_point = get_as<int>(*sp, path + ".switch_point");
    }
    if (const auto* pr = optional_field(j, "post_switch_rule")) {
        const std::string ppath = path + ".post_switch_rule";
        check_keys(*pr, {"rule_type", "blickets"}, ppath, strict);
        PostSwitchRule rule;
        rule.rule_type = rule_type_from_string(
            get_as<std::string>(require(*pr, "rule_type", ppath), ppath + ".rule_type"));
        rule.blickets =
            set_from_string(get_as<std::string>(require(*pr, "blickets", ppath), ppath + ".blickets"));
        c.post_switch_rule = rule;
    }
    c.step_budget = get_as<int>(require(j, "step_budget", path), path + ".step_budget");
    c.seed = get_as<std::uint64_t>(require(j, "seed", path), path + ".seed");
    return c;
}

json answer_to_json(const Answer& a) {
    return {{"rule_type", to_string(a.rule_type)}, {"blickets", set_to_string(a.claimed_blickets)}};
}

Answer answer_from_json(const json& j, const std::string& path, bool strict) {
    check_keys(j, {"rule_type", "blickets"}, path, strict);
    Answer a;
    a.rule_type = rule_type_from_string(get_as<std::string>(require(j, "rule_type", path), path + ".rule_type"));
    a.claimed_blickets = set_from_string(get_as<std::string>(require(j, "blickets", path), path + ".blickets"));
    return a;
}

json action_to_json(const Action& a) {
    json j;
    j["kind"] = to_string(a.kind);
    if (a.kind == ActionKind::place || a.kind == ActionKind::remove) j["object"] = std::string(1, a.object);
    if (a.answer) j["answer"] = answer_to_json(*a.answer);
    return j;
}

Action action_from_json(const json& j, const std::string& path, bool strict) {
    check_keys(j, {"kind", "object", "answer"}, path, strict);
    Action a;
    const std::string kind = get_as<std::string>(require(j, "kind", path), path + ".kind");
    if (kind == "place") a.kind = ActionKind::place;
    else if (kind == "remove") a.kind = ActionKind::remove;
    else if (kind == "check") a.kind = ActionKind::check;
    else if (kind == "noop") a.kind = ActionKind::noop;
    else throw SchemaError(path + ".kind", "unknown action kind: " + kind);
    if (a.kind == ActionKind::place || a.kind == ActionKind::remove) {
        const std::string obj = get_as<std::string>(require(j, "object", path), path + ".object");
        if (obj.size() != 1) throw SchemaError(path + ".object", "object must be a single letter");
        a.object = obj[0];
    }
    if (const auto* ans = optional_field(j, "answer")) {
        a.answer = answer_from_json(*ans, path + ".answer", strict);
    }
    if (a.kind == ActionKind::check && !a.answer) {
        throw SchemaError(path + ".answer", "check action requires an answer");
    }
    return a;
}

json observation_to_json(const Observation& o) {
    return {{"detector", to_string(o.detector)},
            {"steps_remaining", o.steps_remaining},
            {"terminated", o.terminated}};
}

Observation observation_from_json(const json& j, const std::string& path, bool strict) {
    check_keys(j, {"detector", "steps_remaining", "terminated"}, path, strict);
    Observation o;
    const std::string det = get_as<std::string>(require(j, "detector", path), path + ".detector");
    if (det == "ACTIVE") o.detector = DetectorStatus::active;
    else if (det == "INACTIVE") o.detector = DetectorStatus::inactive;
    else throw SchemaError(path + ".detector", "unknown detector status: " + det);
    o.steps_remaining = get_as<int>(require(j, "steps_remaining", path), path + ".steps_remaining");
    o.terminated = get_as<bool>(require(j, "terminated", path), path + ".terminated");
    return o;
}

json verdict_to_json(const Verdict& v) {
    return {{"correct", v.correct},
            {"rule_type_error", v.rule_type_error},
            {"object_set_error", to_string(v.object_set_error)},
            {"graded_against", rule_spec_to_json(v.graded_against)}};
}

Verdict verdict_from_json(const json& j, const std::string& path, bool strict) {
    check_keys(j, {"correct", "rule_type_error", "object_set_error", "graded_against"}, path, strict);
    Verdict v;
    v.correct = get_as<bool>(require(j, "correct", path), path + ".correct");
    v.rule_type_error = get_as<bool>(require(j, "rule_type_error", path), path + ".rule_type_error");
    const std::string ose =
        get_as<std::string>(require(j, "object_set_error", path), path + ".object_set_error");
    if (ose == "none") v.object_set_error = ObjectSetError::none;
    else if (ose == "over_inclusion") v.object_set_error = ObjectSetError::over_inclusion;
    else if (ose == "under_inclusion") v.object_set_error = ObjectSetError::under_inclusion;
    else if (ose == "mixed") v.object_set_error = ObjectSetError::mixed;
    else throw SchemaError(path + ".object_set_error", "unknown object set error: " + ose);
    v.graded_against = rule_spec_from_json(require(j, "graded_against", path), path + ".graded_against", strict);
    return v;
}

json evaluation_to_json(const TriggerEvaluation& e) {
    json j;
    j["behavior_id"] = to_string(e.behavior_id);
    j["step"] = e.step;
    j["prescreen_passed"] = e.prescreen_passed;
    if (e.score) j["score"] = *e.score;
    j["fired"] = e.fired;
    j["runner_up"] = e.runner_up;
    if (e.error) j["error"] = *e.error;
    return j;
}

TriggerEvaluation evaluation_from_json(const json& j, const std::string& path, bool strict) {
    check_keys(j, {"behavior_id", "step", "prescreen_passed", "score", "fired", "runner_up", "error"},
               path, strict);
    TriggerEvaluation e;
    try {
        e.behavior_id = behavior_id_from_string(
            get_as<std::string>(require(j, "behavior_id", path), path + ".behavior_id"));
    } catch (const BehaviorError& err) {
        throw SchemaError(path + ".behavior_id", err.what());
    }
    e.step = get_as<int>(require(j, "step", path), path + ".step");
    e.prescreen_passed = get_as<bool>(require(j, "prescreen_passed", path), path + ".prescreen_passed");
    if (const auto* s = optional_field(j, "score")) e.score = get_as<double>(*s, path + ".score");
    e.fired = get_as<bool>(require(j, "fired", path), path + ".fired");
    e.runner_up = get_as<bool>(require(j, "runner_up", path), path + ".runner_up");
    if (const auto* err = optional_field(j, "error")) e.error = get_as<std::string>(*err, path + ".error");
    if (e.score && !e.prescreen_passed) {
        throw SchemaError(path + ".score", "score present without a passed prescreen");
    }
    if (!e.score && e.prescreen_passed && !e.error) {
        throw SchemaError(path + ".score", "missing score for a passed prescreen");
    }
    if (e.fired && !e.score) throw SchemaError(path + ".fired", "fired without a score");
    return e;
}

json modification_to_json(const ModificationRecord& m) {
    return {{"step", m.step},
            {"source_behavior", m.source_behavior},
            {"added_states", m.added_states},
            {"added_edges", m.added_edges}};
}

ModificationRecord modification_from_json(const json& j, const std::string& path, bool strict) {
    check_keys(j, {"step", "source_behavior", "added_states", "added_edges"}, path, strict);
    ModificationRecord m;
    m.step = get_as<int>(require(j, "step", path), path + ".step");
    m.source_behavior =
        get_as<std::string>(require(j, "source_behavior", path), path + ".source_behavior");
    m.added_states = get_as<std::vector<std::string>>(require(j, "added_states", path), path + ".added_states");
    m.added_edges = get_as<int>(require(j, "added_edges", path), path + ".added_edges");
    return m;
}

json step_to_json(const StepRecord& s) {
    json j;
    j["step_index"] = s.step_index;
    j["prompt_digest"] = s.prompt_digest;
    if (s.prompt_text) j["prompt_text"] = *s.prompt_text;
    json parsed;
    parsed["parse_ok"] = s.parsed.parse_ok;
    if (s.parsed.transition_request) parsed["transition_request"] = *s.parsed.transition_request;
    parsed["action_text"] = s.parsed.action_text;
    j["parsed"] = std::move(parsed);
    if (s.cg_state) j["cg_state"] = *s.cg_state;
    if (s.transition) {
        j["transition"] = {{"target", s.transition->target},
                           {"accepted", s.transition->accepted},
                           {"reason", s.transition->reason}};
    }
    j["action"] = action_to_json(s.action);
    j["observation"] = observation_to_json(s.observation);
    j["notifications_delivered"] = s.notifications_delivered;
    json evals = json::array();
    for (const auto& e : s.monitor_evaluations) evals.push_back(evaluation_to_json(e));
    j["monitor_evaluations"] = std::move(evals);
    return j;
}

StepRecord step_from_json(const json& j, const std::string& path, bool strict) {
    check_keys(j,
               {"step_index", "prompt_digest", "prompt_text", "parsed", "cg_state", "transition",
                "action", "observation", "notifications_delivered", "monitor_evaluations"},
               path, strict);
    StepRecord s;
    s.step_index = get_as<int>(require(j, "step_index", path), path + ".step_index");
    s.prompt_digest = get_as<std::string>(require(j, "prompt_digest", path), path + ".prompt_digest");
    if (const auto* pt = optional_field(j, "prompt_text")) {
        s.prompt_text = get_as<std::string>(*pt, path + ".prompt_text");
    }
    const json& parsed = require(j, "parsed", path);
    const std::string ppath = path + ".parsed";
    check_keys(parsed, {"parse_ok", "transition_request", "action_text"}, ppath, strict);
    s.parsed.parse_ok = get_as<bool>(require(parsed, "parse_ok", ppath), ppath + ".parse_ok");
    if (const auto* tr = optional_field(parsed, "transition_request")) {
        s.parsed.transition_request = get_as<std::string>(*tr, ppath + ".transition_request");
    }
    s.parsed.action_text = get_as<std::string>(require(parsed, "action_text", ppath), ppath + ".action_text");
    if (const auto* cg = optional_field(j, "cg_state")) {
        s.cg_state = get_as<std::string>(*cg, path + ".cg_state");
    }
    if (const auto* tr = optional_field(j, "transition")) {
        const std::string tpath = path + ".transition";
        check_keys(*tr, {"target", "accepted", "reason"}, tpath, strict);
        TransitionOutcome outcome;
        outcome.target = get_as<std::string>(require(*tr, "target", tpath), tpath + ".target");
        outcome.accepted = get_as<bool>(require(*tr, "accepted", tpath), tpath + ".accepted");
        outcome.reason = get_as<std::string>(require(*tr, "reason", tpath), tpath + ".reason");
        s.transition = outcome;
    }
    s.action = action_from_json(require(j, "action", path), path + ".action", strict);
    s.observation = observation_from_json(require(j, "observation", path), path + ".observation", strict);
    s.notifications_delivered = get_as<std::vector<std::string>>(
        require(j, "notifications_delivered", path), path + ".notifications_delivered");
    const json& evals = require(j, "monitor_evaluations", path);
    for (std::size_t i = 0; i < evals.size(); ++i) {
        s.monitor_evaluations.push_back(evaluation_from_json(
            evals[i], path + ".monitor_evaluations[" + std::to_string(i) + "]", strict));
    }
    return s;
}

}  // namespace

json serialize(const EpisodeTrace& trace) {
    json j;
    j["schema_version"] = trace.schema_version;
    j["config"] = config_to_json(trace.config);
    j["scaffolding"] = {{"tier", to_string(trace.scaffolding.tier)},
                        {"evaluator", to_string(trace.scaffolding.evaluator)}};
    json steps = json::array();
    for (const auto& s : trace.steps) steps.push_back(step_to_json(s));
    j["steps"] = std::move(steps);
    json firings = json::array();
    for (const auto& f : trace.firings) {
        firings.push_back({{"behavior_id", to_string(f.behavior_id)}, {"step", f.step}, {"score", f.score}});
    }
    j["firings"] = std::move(firings);
    json mods = json::array();
    for (const auto& m : trace.modification_log) mods.push_back(modification_to_json(m));
    j["modification_log"] = std::move(mods);
    if (trace.final_answer) j["final_answer"] = answer_to_json(*trace.final_answer);
    if (trace.verdict) j["verdict"] = verdict_to_json(*trace.verdict);
    j["activation_count_final"] = trace.activation_count_final;
    j["switched"] = trace.switched;
    j["aborted"] = trace.aborted;
    if (trace.abort_reason) j["abort_reason"] = *trace.abort_reason;
    return j;
}

EpisodeTrace deserialize(const json& j, bool strict) {
    check_keys(j,
               {"schema_version", "config", "scaffolding", "steps", "firings", "modification_log",
                "final_answer", "verdict", "activation_count_final", "switched", "aborted",
                "abort_reason"},
               "trace", strict);
    EpisodeTrace t;
    t.schema_version = get_as<std::string>(require(j, "schema_version", "trace"), "trace.schema_version");
    const std::string major = t.schema_version.substr(0, t.schema_version.find('.'));
    const std::string expected_major =
        std::string(kTraceSchemaVersion).substr(0, std::string(kTraceSchemaVersion).find('.'));
    if (major != expected_major) {
        throw SchemaError("trace.schema_version",
                          "major version mismatch: got " + t.schema_version + ", expected " +
                              kTraceSchemaVersion);
    }
    t.config = config_from_json(require(j, "config", "trace"), "trace.config", strict);
    {
        const json& sc = require(j, "scaffolding", "trace");
        check_keys(sc, {"tier", "evaluator"}, "trace.scaffolding", strict);
        t.scaffolding.tier =
            tier_from_string(get_as<std::string>(require(sc, "tier", "trace.scaffolding"), "trace.scaffolding.tier"));
        t.scaffolding.evaluator = evaluator_kind_from_string(get_as<std::string>(
            require(sc, "evaluator", "trace.scaffolding"), "trace.scaffolding.evaluator"));
    }
    const json& steps = require(j, "steps", "trace");
    for (std::size_t i = 0; i < steps.size(); ++i) {
        t.steps.push_back(step_from_json(steps[i], "trace.steps[" + std::to_string(i) + "]", strict));
    }
    const json& firings = require(j, "firings", "trace");
    for (std::size_t i = 0; i < firings.size(); ++i) {
        const std::string fpath = "trace.firings[" + std::to_string(i) + "]";
        check_keys(firings[i], {"behavior_id", "step", "score"}, fpath, strict);
        Firing f;
        try {
            f.behavior_id = behavior_id_from_string(
                get_as<std::string>(require(firings[i], "behavior_id", fpath), fpath + ".behavior_id"));
        } catch (const BehaviorError& err) {
            throw SchemaError(fpath + ".behavior_id", err.what());
        }
        f.step = get_as<int>(require(firings[i], "step", fpath), fpath + ".step");
        f.score = get_as<double>(require(firings[i], "score", fpath), fpath + ".score");
        t.firings.push_back(f);
    }
    const json& mods = require(j, "modification_log", "trace");
    for (std::size_t i = 0; i < mods.size(); ++i) {
        t.modification_log.push_back(
            modification_from_json(mods[i], "trace.modification_log[" + std::to_string(i) + "]", strict));
    }
    if (const auto* fa = optional_field(j, "final_answer")) {
        t.final_answer = answer_from_json(*fa, "trace.final_answer", strict);
    }
    if (const auto* v = optional_field(j, "verdict")) {
        t.verdict = verdict_from_json(*v, "trace.verdict", strict);
    }
    t.activation_count_final =
        get_as<int>(require(j, "activation_count_final", "trace"), "trace.activation_count_final");
    t.switched = get_as<bool>(require(j, "switched", "trace"), "trace.switched");
    t.aborted = get_as<bool>(require(j, "aborted", "trace"), "trace.aborted");
    if (const auto* ar = optional_field(j, "abort_reason")) {
        t.abort_reason = get_as<std::string>(*ar, "trace.abort_reason");
    }

    // cross-field invariants
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        if (t.steps[i].step_index != static_cast<int>(i) + 1) {
            throw SchemaError("trace.steps[" + std::to_string(i) + "].step_index",
                              "step indices must increase strictly from 1");
        }
    }
    const bool has_check = std::any_of(t.steps.begin(), t.steps.end(), [](const StepRecord& s) {
        return s.action.kind == ActionKind::check;
    });
    if (t.final_answer.has_value() != has_check) {
        throw SchemaError("trace.final_answer", "final_answer present iff some step's action is check");
    }
    for (std::size_t i = 0; i < t.firings.size(); ++i) {
        const Firing& f = t.firings[i];
        bool backed = false;
        for (const auto& s : t.steps) {
            for (const auto& e : s.monitor_evaluations) {
                if (e.behavior_id == f.behavior_id && e.step == f.step && e.fired) backed = true;
            }
        }
        if (!backed) {
            throw SchemaError("trace.firings[" + std::to_string(i) + "]",
                              "firing not backed by a fired monitor evaluation");
        }
    }
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        const bool expect_state = t.scaffolding.tier != Tier::base;
        if (t.steps[i].cg_state.has_value() != expect_state) {
            throw SchemaError("trace.steps[" + std::to_string(i) + "].cg_state",
                              expect_state ? "missing cg_state for a scaffolded tier"
                                           : "cg_state present for the base tier");
        }
    }
    return t;
}

std::string trace_to_string(const EpisodeTrace& trace) { return serialize(trace).dump(2) + "\n"; }

EpisodeTrace trace_from_string(const std::string& text, bool strict) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError("trace", std::string("not valid JSON: ") + e.what());
    }
    return deserialize(j, strict);
}

std::string episode_file_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ep_%05d.json", index);
    return buf;
}

namespace {

json manifest_to_json(const RunManifest& m) {
    json j;
    j["schema_version"] = m.schema_version;
    j["run_id"] = m.run_id;
    j["base_seed"] = m.base_seed;
    j["policy"] = m.policy;
    j["evaluator"] = to_string(m.evaluator);
    json eps = json::array();
    for (const auto& e : m.episodes) {
        eps.push_back({{"index", e.index},
                       {"file", e.file},
                       {"seed", e.seed},
                       {"condition", to_string(e.condition)},
                       {"tier", to_string(e.tier)},
                       {"aborted", e.aborted}});
    }
    j["episodes"] = std::move(eps);
    return j;
}

RunManifest manifest_from_json(const json& j) {
    RunManifest m;
    m.schema_version = get_as<std::string>(require(j, "schema_version", "manifest"), "manifest.schema_version");
    m.run_id = get_as<std::string>(require(j, "run_id", "manifest"), "manifest.run_id");
    m.base_seed = get_as<std::uint64_t>(require(j, "base_seed", "manifest"), "manifest.base_seed");
    m.policy = get_as<std::string>(require(j, "policy", "manifest"), "manifest.policy");
    m.evaluator = evaluator_kind_from_string(
        get_as<std::string>(require(j, "evaluator", "manifest"), "manifest.evaluator"));
    const json& eps = require(j, "episodes", "manifest");
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const std::string path = "manifest.episodes[" + std::to_string(i) + "]";
        ManifestEpisode e;
        e.index = get_as<int>(require(eps[i], "index", path), path + ".index");
        e.file = get_as<std::string>(require(eps[i], "file", path), path + ".file");
        e.seed = get_as<std::uint64_t>(require(eps[i], "seed", path), path + ".seed");
        e.condition = condition_from_string(
            get_as<std::string>(require(eps[i], "condition", path), path + ".condition"));
        e.tier = tier_from_string(get_as<std::string>(require(eps[i], "tier", path), path + ".tier"));
        e.aborted = get_as<bool>(require(eps[i], "aborted", path), path + ".aborted");
        m.episodes.push_back(std::move(e));
    }
    return m;
}

}  // namespace

void store_run(const std::filesystem::path& dir, const std::vector<EpisodeTrace>& traces,
               const RunManifest& manifest) {
    if (manifest.episodes.size() != traces.size()) {
        throw RunStoreError("manifest-mismatch: manifest lists " +
                            std::to_string(manifest.episodes.size()) + " episodes but " +
                            std::to_string(traces.size()) + " traces were given");
    }
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < traces.size(); ++i) {
        std::ofstream out(dir / manifest.episodes[i].file, std::ios::binary);
        if (!out) throw RunStoreError("cannot write " + (dir / manifest.episodes[i].file).string());
        out << trace_to_string(traces[i]);
    }
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw RunStoreError("cannot write " + (dir / "manifest.json").string());
    out << manifest_to_json(manifest).dump(2) << "\n";
}

RunManifest load_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json", std::ios::binary);
    if (!in) throw RunStoreError("missing-file: " + (dir / "manifest.json").string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError("manifest", std::string("not valid JSON: ") + e.what());
    }
    return manifest_from_json(j);
}

std::vector<EpisodeTrace> load_run(const std::filesystem::path& dir, bool strict,
                                   RunManifest* manifest_out) {
    const RunManifest manifest = load_manifest(dir);

    std::size_t on_disk = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("ep_", 0) == 0 && entry.path().extension() == ".json") ++on_disk;
    }
    if (on_disk != manifest.episodes.size()) {
        throw RunStoreError("manifest-mismatch: manifest lists " +
                            std::to_string(manifest.episodes.size()) + " episodes but " +
                            std::to_string(on_disk) + " trace files are present");
    }

    std::vector<EpisodeTrace> traces;
    for (const auto& e : manifest.episodes) {
        std::ifstream in(dir / e.file, std::ios::binary);
        if (!in) throw RunStoreError("missing-file: " + (dir / e.file).string());
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        EpisodeTrace t = trace_from_string(text, strict);
        if (t.config.seed != e.seed) {
            throw RunStoreError("manifest-mismatch: " + e.file + " has seed " +
                                std::to_string(t.config.seed) + " but the manifest claims " +
                                std::to_string(e.seed));
        }
        traces.push_back(std::move(t));
    }
    if (manifest_out) *manifest_out = manifest;
    return traces;
}

}  // namespace blicket
