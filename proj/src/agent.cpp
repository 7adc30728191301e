#include "blicket/agent.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace blicket {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

std::string object_list_sentence(int count) {
    const auto names = object_names(count);
    std::string list;
    for (int i = 0; i < count; ++i) {
        if (i > 0) list += i + 1 == count ? ", and " : ", ";
        list += names[static_cast<std::size_t>(i)];
    }
    return list;
}

}  // namespace

std::string task_description(int object_count) {
    std::ostringstream out;
    out << "You are interacting with a `blicket detector' --- a device\n"
           "that glows when certain objects (called 'blickets') are\n"
           "placed on it.\n"
           "\n"
           "There are "
        << object_count << " objects: " << object_list_sentence(object_count)
        << ". Some may be\n"
           "blickets, some may not.\n"
           "\n"
           "The detector follows a hidden rule:\n"
           "- CONJUNCTIVE: ALL blicket objects must be on the detector\n"
           "  for it to activate.\n"
           "- DISJUNCTIVE: ANY single blicket object is enough to\n"
           "  activate the detector.\n"
           "\n"
           "Your goal: Figure out which objects are blickets AND whether\n"
           "the rule is conjunctive or disjunctive.\n"
           "\n"
           "You can place objects, remove objects, and observe whether\n"
           "the detector activates. When you're confident, submit your\n"
           "answer.\n"
           "\n"
           "Respond with:\n"
           "REASONING: <your current thinking>\n"
           "ACTION: <number or action name>";
    return out.str();
}

std::string action_menu(int object_count) {
    const auto names = object_names(object_count);
    std::ostringstream out;
    out << "Available actions:\n";
    int index = 1;
    for (char o : names) out << "  " << index++ << ". place " << o << "\n";
    for (char o : names) out << "  " << index++ << ". remove " << o << "\n";
    out << "  " << index << ". check (submit final answer)\n";
    out << "\n"
           "To submit with check, also include:\n"
           "RULE_TYPE: conjunctive or disjunctive\n"
           "BLICKETS: <comma-separated object letters>";
    return out.str();
}

std::string observation_message(int step_index, const Observation& obs,
                                const std::optional<TransitionOutcome>& transition) {
    std::ostringstream out;
    out << "Step " << step_index << " result: Detector: " << to_string(obs.detector)
        << ". Steps remaining: " << obs.steps_remaining << ".";
    if (transition) {
        out << " (transition to " << transition->target
            << (transition->accepted ? " accepted)" : " rejected: " + transition->reason + ")");
    }
    if (obs.terminated) out << " Episode terminated.";
    return out.str();
}

std::string PromptContext::system_text() const {
    std::string out = task_description;
    if (graph_rendering) {
        out += "\n\n" + *graph_rendering +
               "\nTo change states, include TRANSITION: STATE_NAME in your response.";
    }
    out += "\n\n" + available_actions;
    return out;
}

std::string PromptContext::full_text() const {
    std::string out = system_text();
    for (const auto& n : pending_notifications) out += "\n[notification] " + n;
    for (const auto& m : history) out += "\n[" + m.role + "] " + m.content;
    return out;
}

std::vector<std::string> ScaffoldingConfig::validate() const {
    std::vector<std::string> v;
    switch (tier) {
        case Tier::base:
            if (graph_template) v.push_back("base tier must not carry a context graph");
            if (behavior_set) v.push_back("base tier must not carry behaviors");
            break;
        case Tier::cg:
            if (!graph_template) v.push_back("cg tier requires a context graph");
            if (behavior_set) v.push_back("cg tier must not carry behaviors");
            break;
        case Tier::cg_db:
            if (!graph_template) v.push_back("cg_db tier requires a context graph");
            if (!behavior_set) v.push_back("cg_db tier requires behaviors");
            break;
    }
    if (evaluator == EvaluatorKind::external && tier == Tier::cg_db && !evaluator_endpoint) {
        v.push_back("external evaluator requires an endpoint");
    }
    if (inhibition_margin < 0.0) v.push_back("inhibition_margin must be >= 0");
    return v;
}

ScaffoldingConfig ScaffoldingConfig::for_tier(Tier tier, EvaluatorKind evaluator) {
    ScaffoldingConfig c;
    c.tier = tier;
    c.evaluator = evaluator;
    if (tier != Tier::base) c.graph_template = ContextGraph::base_graph();
    if (tier == Tier::cg_db) c.behavior_set = default_behaviors();
    return c;
}

ParsedResponse parse_response(const std::string& text, int object_count) {
    ParsedResponse r;
    const auto names = object_names(object_count);
    const ObjectSet valid(names.begin(), names.end());

    std::optional<std::string> action_value, rule_value, blickets_value;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        const std::string key = lower(trim(line.substr(0, colon)));
        const std::string value = trim(line.substr(colon + 1));
        if (key == "reasoning" && r.reasoning.empty()) r.reasoning = value;
        else if (key == "transition" && !r.transition_request) r.transition_request = upper(value);
        else if (key == "action" && !action_value) action_value = value;
        else if (key == "rule_type" && !rule_value) rule_value = lower(value);
        else if (key == "blickets" && !blickets_value) blickets_value = value;
    }

    if (!action_value || action_value->empty()) {
        r.transition_request.reset();
        return r;  // parse_ok = false
    }

    // numeric menu index: 1..k place, k+1..2k remove, 2k+1 check
    std::optional<Action> action;
    const std::string av = *action_value;
    if (std::all_of(av.begin(), av.end(), [](unsigned char c) { return std::isdigit(c); })) {
        const int idx = std::atoi(av.c_str());
        if (idx >= 1 && idx <= object_count) {
            action = Action::place(names[static_cast<std::size_t>(idx - 1)]);
        } else if (idx > object_count && idx <= 2 * object_count) {
            action = Action::remove(names[static_cast<std::size_t>(idx - object_count - 1)]);
        } else if (idx == 2 * object_count + 1) {
            action = Action{ActionKind::check, 0, std::nullopt};
        }
    } else {
        std::istringstream words(lower(av));
        std::string verb, obj;
        words >> verb >> obj;
        if (verb == "check") {
            action = Action{ActionKind::check, 0, std::nullopt};
        } else if (verb == "noop") {
            action = Action::noop();
        } else if ((verb == "place" || verb == "remove") && obj.size() == 1) {
            const char o = static_cast<char>(std::toupper(static_cast<unsigned char>(obj[0])));
            if (valid.count(o)) {
                action = verb == "place" ? Action::place(o) : Action::remove(o);
            }
        }
    }
    if (!action) {
        r.transition_request.reset();
        return r;
    }

    if (action->kind == ActionKind::check) {
        if (!rule_value || !blickets_value) {
            r.transition_request.reset();
            return r;
        }
        Answer answer;
        if (*rule_value == "conjunctive") answer.rule_type = RuleType::conjunctive;
        else if (*rule_value == "disjunctive") answer.rule_type = RuleType::disjunctive;
        else {
            r.transition_request.reset();
            return r;
        }
        std::string token;
        for (char c : *blickets_value) {
            if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
                token += ' ';
            } else {
                token += c;
            }
        }
        std::istringstream toks(token);
        std::string t;
        bool ok = true;
        while (toks >> t) {
            if (lower(t) == "none") continue;
            if (t.size() != 1) { ok = false; break; }
            const char o = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
            if (!valid.count(o)) { ok = false; break; }
            answer.claimed_blickets.insert(o);
        }
        if (!ok) {
            r.transition_request.reset();
            return r;
        }
        action->answer = answer;
        r.answer = answer;
    }

    r.action = action;
    r.parse_ok = true;
    return r;
}

namespace {

std::string canonical_action_text(const Action& a) {
    switch (a.kind) {
        case ActionKind::place: return std::string("place ") + a.object;
        case ActionKind::remove: return std::string("remove ") + a.object;
        case ActionKind::check: return "check";
        case ActionKind::noop: return "noop";
    }
    return "noop";
}

std::string hex_digest(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string initial_message(const EpisodeConfig& config) {
    std::ostringstream out;
    out << "You see the blicket detector. It is INACTIVE and no objects are placed. Steps remaining: "
        << config.step_budget << ". Choose your first action.";
    return out.str();
}

}  // namespace

EpisodeTrace run_episode(const EpisodeConfig& config, const ScaffoldingConfig& scaffolding,
                         Policy& policy) {
    {
        auto v = scaffolding.validate();
        if (!v.empty()) throw ConfigError(std::move(v));
    }
    Environment env(config);

    EpisodeTrace trace;
    trace.config = env.config();
    trace.scaffolding = {scaffolding.tier, scaffolding.evaluator};

    std::optional<ContextGraph> graph;
    if (scaffolding.tier != Tier::base) graph = *scaffolding.graph_template;

    std::optional<MonitorState> monitors;
    std::unique_ptr<TriggerEvaluator> evaluator;
    TraceFeatures features;
    if (scaffolding.tier == Tier::cg_db) {
        monitors.emplace(*scaffolding.behavior_set, scaffolding.inhibition_margin);
        if (scaffolding.evaluator == EvaluatorKind::external) {
            evaluator = std::make_unique<ExternalEvaluator>(*scaffolding.evaluator_endpoint);
        } else {
            evaluator = std::make_unique<HeuristicEvaluator>();
        }
    }

    const std::string task = task_description(config.object_count);
    const std::string menu = action_menu(config.object_count);
    std::vector<Message> history{{"user", initial_message(config)}};
    std::vector<Notification> pending;

    while (!env.terminated() && env.steps_used() < config.step_budget) {
        PromptContext ctx;
        ctx.task_description = task;
        if (graph) ctx.graph_rendering = graph->render();
        ctx.available_actions = menu;
        for (const auto& n : pending) {
            ctx.pending_notifications.push_back(n.text);
            history.push_back({"system", n.text});  // delivered once, persists in history
        }
        const std::vector<std::string> delivered = ctx.pending_notifications;
        pending.clear();
        ctx.history = history;

        std::string reply;
        try {
            reply = policy.decide(ctx);
        } catch (const std::exception& e) {
            trace.aborted = true;
            trace.abort_reason = std::string("policy-failure: ") + e.what();
            break;
        }

        const ParsedResponse parsed = parse_response(reply, config.object_count);
        std::optional<TransitionOutcome> transition;
        if (parsed.transition_request) {
            if (graph) {
                const TransitionResult res = graph->validate_transition(*parsed.transition_request);
                transition = TransitionOutcome{*parsed.transition_request, res.accepted, res.reason};
            } else {
                transition = TransitionOutcome{*parsed.transition_request, false, "no-graph"};
            }
        }
        const Action action = parsed.action.value_or(Action::noop());
        const Observation obs = env.step(action);

        history.push_back({"assistant", reply});
        history.push_back({"user", observation_message(env.steps_used(), obs, transition)});

        StepRecord rec;
        rec.step_index = env.steps_used();
        rec.prompt_digest = hex_digest(fnv1a64(ctx.full_text().data(), ctx.full_text().size()));
        if (scaffolding.store_prompt_text) rec.prompt_text = ctx.full_text();
        rec.parsed = {parsed.parse_ok, parsed.transition_request, canonical_action_text(action)};
        if (graph) rec.cg_state = graph->current();
        rec.transition = transition;
        rec.action = action;
        rec.observation = obs;
        rec.notifications_delivered = delivered;

        if (monitors) {
            ConfigOutcome outcome;
            for (const auto& p : env.placement()) outcome.ordering.push_back(p.object);
            outcome.outcome = obs.detector;
            features.evaluations.push_back(std::move(outcome));
            features.steps_used = env.steps_used();
            features.activation_count = env.activation_count();
            features.last_activation_step = env.last_activation_step();

            const EpisodeSnapshot snapshot{env.steps_used(), env.activation_count(),
                                           env.last_activation_step()};
            const CondensedContext condensed = condense(history, graph->current(), features);
            std::vector<Notification> fired_now;
            rec.monitor_evaluations = monitors->on_step(env.steps_used(), snapshot, condensed, features,
                                                        *evaluator, *graph, fired_now);
            for (const auto& n : fired_now) {
                for (const auto& e : rec.monitor_evaluations) {
                    if (e.behavior_id == n.source && e.fired) {
                        trace.firings.push_back({e.behavior_id, e.step, *e.score});
                    }
                }
                pending.push_back(n);
            }
        }
        trace.steps.push_back(std::move(rec));
    }

    trace.final_answer = env.submitted_answer();
    trace.verdict = env.verdict();
    trace.activation_count_final = env.activation_count();
    trace.switched = env.switched();
    if (graph) trace.modification_log = graph->modification_log();
    return trace;
}

// ---- external adapters -------------------------------------------------------

namespace {

struct ParsedUrl {
    std::string base;  // scheme://host:port
    std::string path;  // /decide
};

ParsedUrl parse_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw PolicyError("malformed endpoint url: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string post_plain_text(const EndpointConfig& endpoint, const std::string& body,
                            std::string& error) {
    const ParsedUrl parsed = parse_url(endpoint.url);
    httplib::Client client(parsed.base);
    const auto seconds = static_cast<time_t>(endpoint.timeout_seconds);
    const auto micros =
        static_cast<time_t>((endpoint.timeout_seconds - static_cast<double>(seconds)) * 1e6);
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);

    const auto res = client.Post(parsed.path, body, "application/json");
    if (!res) {
        error = "transport-error: " + httplib::to_string(res.error());
        return {};
    }
    if (res->status != 200) {
        error = "endpoint returned status " + std::to_string(res->status);
        return {};
    }
    error.clear();
    return res->body;
}

class ExternalPolicy final : public Policy {
public:
    explicit ExternalPolicy(EndpointConfig endpoint) : endpoint_(std::move(endpoint)) {}

    std::string decide(const PromptContext& ctx) override {
        nlohmann::json body;
        body["system_text"] = ctx.system_text();
        nlohmann::json messages = nlohmann::json::array();
        for (const auto& m : ctx.history) {
            messages.push_back({{"role", m.role}, {"content", m.content}});
        }
        body["messages"] = std::move(messages);
        body["metadata"] = {{"kind", "policy"}};
        std::string error;
        const std::string reply = post_plain_text(endpoint_, body.dump(), error);
        if (!error.empty()) throw PolicyError(error);
        return reply;
    }

private:
    EndpointConfig endpoint_;
};

}  // namespace

std::unique_ptr<Policy> make_external_policy(const EndpointConfig& endpoint) {
    return std::make_unique<ExternalPolicy>(endpoint);
}

std::optional<double> ExternalEvaluator::score(const BehaviorSpec& spec, const CondensedContext& ctx,
                                               const TraceFeatures&, std::string& error) {
    std::ostringstream prompt;
    prompt << "You are evaluating whether a specific condition has been met\n"
              "in an agent's exploration of a causal learning task.\n"
              "\n"
              "Condition to evaluate:\n"
           << spec.evaluation_prompt
           << "\n"
              "\n"
              "Current CG state: "
           << ctx.current_state << "\nExploration summary: " << ctx.exploration_summary
           << "\nRecent conversation:\n";
    for (const auto& m : ctx.recent_messages) prompt << "[" << m.role << "] " << m.content << "\n";
    prompt << "\n"
              "Rate how strongly this condition is met on a scale of 0-10,\n"
              "where 0 = definitely not met and 10 = clearly met.\n"
              "Respond with just the number.";

    nlohmann::json body;
    body["system_text"] = prompt.str();
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : ctx.recent_messages) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    body["messages"] = std::move(messages);
    body["metadata"] = {{"kind", "trigger_evaluation"}, {"behavior", to_string(spec.id)}};

    std::string transport_error;
    const std::string reply = post_plain_text(endpoint_, body.dump(), transport_error);
    if (!transport_error.empty()) {
        error = "evaluator-unavailable: " + transport_error;
        return std::nullopt;
    }
    const std::string token = trim(reply);
    char* end = nullptr;
    const double value = std::strtod(token.c_str(), &end);
    if (token.empty() || end == token.c_str()) {
        error = "unparseable-score";
        return std::nullopt;
    }
    return value;  // clamped to [0, 10] by the monitor pipeline
}

}  // namespace blicket
