#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "blicket/agent.hpp"
#include "blicket/metrics.hpp"
#include "blicket/scripted.hpp"

using namespace blicket;

namespace {

EpisodeConfig hm_config(std::uint64_t seed, int n = 3,
                        PostRuleKind post = PostRuleKind::easy_disjunctive) {
    RoleOptions options;
    options.switch_point = n;
    options.post_rule = post;
    return assign_roles(Condition::hidden_moderator, 5, seed, options);
}

struct CannedPolicy final : Policy {
    std::vector<std::string> replies;
    std::size_t at = 0;
    std::vector<PromptContext> seen;
    std::string decide(const PromptContext& ctx) override {
        seen.push_back(ctx);
        if (at < replies.size()) return replies[at++];
        return "REASONING: waiting\nACTION: noop";
    }
};

}  // namespace

TEST_CASE("parse_response: action names, menu numbers, and check answers") {
    const auto place = parse_response("REASONING: test\nACTION: place A", 5);
    REQUIRE(place.parse_ok);
    CHECK(place.action->kind == ActionKind::place);
    CHECK(place.action->object == 'A');
    CHECK(place.reasoning == "test");

    // numeric menu: 1..5 place, 6..10 remove, 11 check
    const auto numeric = parse_response("ACTION: 7", 5);
    REQUIRE(numeric.parse_ok);
    CHECK(numeric.action->kind == ActionKind::remove);
    CHECK(numeric.action->object == 'B');

    const auto check = parse_response(
        "TRANSITION: HYPOTHESIS_EVALUATION\nACTION: check\nRULE_TYPE: disjunctive\nBLICKETS: C", 5);
    REQUIRE(check.parse_ok);
    CHECK(check.transition_request == "HYPOTHESIS_EVALUATION");
    CHECK(check.action->kind == ActionKind::check);
    REQUIRE(check.answer.has_value());
    CHECK(check.answer->rule_type == RuleType::disjunctive);
    CHECK(check.answer->claimed_blickets == ObjectSet{'C'});

    const auto numeric_check = parse_response("action: 11\nrule_type: Conjunctive\nblickets: a, b", 5);
    REQUIRE(numeric_check.parse_ok);
    CHECK(numeric_check.answer->rule_type == RuleType::conjunctive);
    CHECK(numeric_check.answer->claimed_blickets == ObjectSet{'A', 'B'});
}

TEST_CASE("parse_response failure modes") {
    // no ACTION line at all
    const auto missing = parse_response("I think B is a blicket", 5);
    CHECK_FALSE(missing.parse_ok);
    CHECK_FALSE(missing.action.has_value());
    CHECK_FALSE(missing.transition_request.has_value());

    // transition-only responses are parse failures (an action is required)
    const auto transition_only = parse_response("TRANSITION: VERIFICATION", 5);
    CHECK_FALSE(transition_only.parse_ok);
    CHECK_FALSE(transition_only.transition_request.has_value());

    // menu index out of range; unknown object; check without an answer
    CHECK_FALSE(parse_response("ACTION: 12", 5).parse_ok);
    CHECK_FALSE(parse_response("ACTION: place Z", 5).parse_ok);
    CHECK_FALSE(parse_response("ACTION: place F", 5).parse_ok);
    CHECK(parse_response("ACTION: place E", 5).parse_ok);
    CHECK_FALSE(parse_response("ACTION: place E", 4).parse_ok);  // E out of a 4-object set
    CHECK_FALSE(parse_response("ACTION: check\nRULE_TYPE: conjunctive", 5).parse_ok);
    CHECK_FALSE(parse_response("ACTION: check\nBLICKETS: A", 5).parse_ok);
    CHECK_FALSE(parse_response("ACTION: check\nRULE_TYPE: both\nBLICKETS: A", 5).parse_ok);

    // empty blickets list is a legal (graded-wrong) answer
    const auto empty = parse_response("ACTION: check\nRULE_TYPE: conjunctive\nBLICKETS: none", 5);
    REQUIRE(empty.parse_ok);
    CHECK(empty.answer->claimed_blickets.empty());

    // first match wins
    const auto twice = parse_response("ACTION: place A\nACTION: place B", 5);
    CHECK(twice.action->object == 'A');
}

TEST_CASE("task description is parameterized by object count") {
    const std::string five = task_description(5);
    CHECK(five.find("There are 5 objects: A, B, C, D, and E.") != std::string::npos);
    CHECK(five.find("REASONING: <your current thinking>") != std::string::npos);
    const std::string three = task_description(3);
    CHECK(three.find("There are 3 objects: A, B, and C.") != std::string::npos);
    const std::string menu = action_menu(5);
    CHECK(menu.find("1. place A") != std::string::npos);
    CHECK(menu.find("10. remove E") != std::string::npos);
    CHECK(menu.find("11. check") != std::string::npos);
}

TEST_CASE("scaffolding invariants follow the tier table") {
    CHECK(ScaffoldingConfig::for_tier(Tier::base).validate().empty());
    CHECK(ScaffoldingConfig::for_tier(Tier::cg).validate().empty());
    CHECK(ScaffoldingConfig::for_tier(Tier::cg_db).validate().empty());

    ScaffoldingConfig bad = ScaffoldingConfig::for_tier(Tier::base);
    bad.graph_template = ContextGraph::base_graph();
    CHECK_FALSE(bad.validate().empty());

    ScaffoldingConfig cg = ScaffoldingConfig::for_tier(Tier::cg);
    cg.behavior_set = default_behaviors();
    CHECK_FALSE(cg.validate().empty());

    ScaffoldingConfig db = ScaffoldingConfig::for_tier(Tier::cg_db);
    db.behavior_set.reset();
    CHECK_FALSE(db.validate().empty());
}

TEST_CASE("tier isolation: base sees no graph, cg sees no notifications") {
    for (Tier tier : {Tier::base, Tier::cg, Tier::cg_db}) {
        const EpisodeConfig config = hm_config(11);
        auto policy = make_scripted_policy(tier, 5);
        const EpisodeTrace trace = run_episode(config, ScaffoldingConfig::for_tier(tier), *policy);
        // re-run with a recording policy to capture the prompts
        struct Spy final : Policy {
            std::unique_ptr<Policy> inner;
            bool saw_graph = false;
            bool saw_notification = false;
            std::string decide(const PromptContext& ctx) override {
                saw_graph = saw_graph || ctx.graph_rendering.has_value();
                for (const auto& m : ctx.history) {
                    if (m.content.find("[SYSTEM]") != std::string::npos) saw_notification = true;
                }
                if (!ctx.pending_notifications.empty()) saw_notification = true;
                return inner->decide(ctx);
            }
        };
        Spy spy;
        spy.inner = make_scripted_policy(tier, 5);
        run_episode(config, ScaffoldingConfig::for_tier(tier), spy);
        if (tier == Tier::base) {
            CHECK_FALSE(spy.saw_graph);
            CHECK_FALSE(spy.saw_notification);
            for (const auto& s : trace.steps) CHECK_FALSE(s.cg_state.has_value());
        }
        if (tier == Tier::cg) {
            CHECK(spy.saw_graph);
            CHECK_FALSE(spy.saw_notification);
            CHECK(trace.firings.empty());
        }
        if (tier == Tier::cg_db) {
            CHECK(spy.saw_graph);
            CHECK(spy.saw_notification);
        }
    }
}

TEST_CASE("step parity: one trace record per consumed step") {
    const EpisodeConfig config = hm_config(21);
    for (Tier tier : {Tier::base, Tier::cg, Tier::cg_db}) {
        auto policy = make_scripted_policy(tier, 5);
        const EpisodeTrace trace = run_episode(config, ScaffoldingConfig::for_tier(tier), *policy);
        CHECK_FALSE(trace.aborted);
        for (std::size_t i = 0; i < trace.steps.size(); ++i) {
            CHECK(trace.steps[i].step_index == static_cast<int>(i) + 1);
            CHECK(trace.steps[i].step_index + trace.steps[i].observation.steps_remaining ==
                  config.step_budget);
        }
        // round-trips through the schema, proving consistency invariants
        CHECK(deserialize(serialize(trace), true) == trace);
    }
}

TEST_CASE("notification causality: every delivered [SYSTEM] text follows one earlier firing") {
    const EpisodeConfig config = hm_config(33);
    auto policy = make_scripted_policy(Tier::cg_db, 5);
    const EpisodeTrace trace = run_episode(config, ScaffoldingConfig::for_tier(Tier::cg_db), *policy);
    REQUIRE_FALSE(trace.firings.empty());
    for (const auto& step : trace.steps) {
        for (const auto& text : step.notifications_delivered) {
            int matching_firings = 0;
            for (const auto& b : default_behaviors()) {
                if (b.notification != text) continue;
                for (const auto& f : trace.firings) {
                    if (f.behavior_id == b.id && f.step < step.step_index) ++matching_firings;
                }
            }
            CHECK(matching_firings == 1);
        }
    }
}

TEST_CASE("scripted policies solve deterministic standard conditions") {
    for (Condition condition : {Condition::conjunctive, Condition::disjunctive}) {
        for (Tier tier : {Tier::base, Tier::cg, Tier::cg_db}) {
            for (std::uint64_t seed : {1ULL, 7ULL, 23ULL, 99ULL, 512ULL}) {
                const EpisodeConfig config = assign_roles(condition, 5, seed);
                auto policy = make_scripted_policy(tier, 5);
                const EpisodeTrace trace =
                    run_episode(config, ScaffoldingConfig::for_tier(tier), *policy);
                REQUIRE_FALSE(trace.aborted);
                REQUIRE(trace.verdict.has_value());
                CHECK(trace.verdict->correct);
                CHECK(static_cast<int>(trace.steps.size()) <= config.step_budget);
            }
        }
    }
    // 3-object variant works too
    const EpisodeConfig small = assign_roles(Condition::conjunctive, 3, 5);
    auto policy = make_scripted_policy(Tier::cg, 3);
    const EpisodeTrace trace = run_episode(small, ScaffoldingConfig::for_tier(Tier::cg), *policy);
    CHECK(trace.verdict->correct);
}

TEST_CASE("cg-scripted emits accepted transitions on the designed path") {
    const EpisodeConfig config = assign_roles(Condition::conjunctive, 5, 3);
    auto policy = make_scripted_policy(Tier::cg, 5);
    const EpisodeTrace trace = run_episode(config, ScaffoldingConfig::for_tier(Tier::cg), *policy);
    std::vector<std::string> accepted;
    for (const auto& s : trace.steps) {
        if (s.transition && s.transition->accepted) accepted.push_back(s.transition->target);
    }
    const std::vector<std::string> expected{"COMBINATION_TESTING", "HYPOTHESIS_EVALUATION",
                                            "VERIFICATION"};
    CHECK(accepted == expected);
}

TEST_CASE("hidden moderator tier pattern: base pre-switch, cg trapped, cg_db recovers") {
    int cg_db_firings = 0;
    for (std::uint64_t seed = 50; seed < 60; ++seed) {
        const EpisodeConfig config = hm_config(seed);

        auto base = make_scripted_policy(Tier::base, 5);
        const EpisodeTrace base_trace =
            run_episode(config, ScaffoldingConfig::for_tier(Tier::base), *base);
        CHECK(base_trace.verdict->correct);
        CHECK(classify_episode(base_trace).category == EpisodeCategory::pre_switch);

        auto cg = make_scripted_policy(Tier::cg, 5);
        const EpisodeTrace cg_trace = run_episode(config, ScaffoldingConfig::for_tier(Tier::cg), *cg);
        CHECK_FALSE(cg_trace.verdict->correct);
        CHECK(classify_episode(cg_trace).category == EpisodeCategory::exactly_n);
        CHECK(cg_trace.final_answer->claimed_blickets == config.blickets);

        auto cg_db = make_scripted_policy(Tier::cg_db, 5);
        const EpisodeTrace db_trace =
            run_episode(config, ScaffoldingConfig::for_tier(Tier::cg_db), *cg_db);
        CHECK(db_trace.verdict->correct);
        CHECK(classify_episode(db_trace).category == EpisodeCategory::reasoning_eligible);
        for (const auto& f : db_trace.firings) {
            if (f.behavior_id == BehaviorId::rule_change_hypothesis) ++cg_db_firings;
        }
    }
    CHECK(cg_db_firings == 10);  // DB4 fired in every episode
}

TEST_CASE("worst-case pair draw still recovers within the 75-step budget") {
    // {D,E} is the last pair in lexicographic search order
    const std::uint64_t seed = 4;
    const EpisodeConfig config = assign_roles(Condition::hidden_moderator, 5, seed);
    REQUIRE(config.blickets == ObjectSet{'D', 'E'});
    auto policy = make_scripted_policy(Tier::cg_db, 5);
    const EpisodeTrace trace = run_episode(config, ScaffoldingConfig::for_tier(Tier::cg_db), *policy);
    CHECK(trace.verdict->correct);
    CHECK(static_cast<int>(trace.steps.size()) <= config.step_budget);
    CHECK(classify_episode(trace).category == EpisodeCategory::reasoning_eligible);
}

TEST_CASE("3-object hidden moderator keeps the tier pattern") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const EpisodeConfig config = assign_roles(Condition::hidden_moderator, 3, seed);
        auto base = make_scripted_policy(Tier::base, 3);
        const EpisodeTrace base_trace =
            run_episode(config, ScaffoldingConfig::for_tier(Tier::base), *base);
        CHECK(classify_episode(base_trace).category == EpisodeCategory::pre_switch);
        CHECK(base_trace.verdict->correct);

        auto cg_db = make_scripted_policy(Tier::cg_db, 3);
        const EpisodeTrace db_trace =
            run_episode(config, ScaffoldingConfig::for_tier(Tier::cg_db), *cg_db);
        CHECK(db_trace.verdict->correct);
        bool db4 = false;
        for (const auto& f : db_trace.firings) {
            if (f.behavior_id == BehaviorId::rule_change_hypothesis) {
                db4 = true;
                CHECK(f.step >= 10);
            }
        }
        CHECK(db4);
    }
}

TEST_CASE("winner and runner-up notifications arrive together, winner first") {
    const EpisodeConfig config = hm_config(50);
    auto policy = make_scripted_policy(Tier::cg_db, 5);
    const EpisodeTrace trace = run_episode(config, ScaffoldingConfig::for_tier(Tier::cg_db), *policy);
    bool found = false;
    for (const auto& step : trace.steps) {
        if (step.notifications_delivered.size() == 2) {
            // DB3 wins the tie by id order, DB4 fires as the runner-up
            CHECK(step.notifications_delivered[0].find("RELIABILITY_TESTING") != std::string::npos);
            CHECK(step.notifications_delivered[1].find("MODERATOR_DETECTION") != std::string::npos);
            found = true;
        }
    }
    CHECK(found);
    // patches applied in the same order
    REQUIRE(trace.modification_log.size() >= 3);  // DB1 early, then DB3 + DB4 together
    CHECK(trace.modification_log[0].source_behavior == "exploration_stagnation");
    CHECK(trace.modification_log[1].source_behavior == "stochasticity_hypothesis");
    CHECK(trace.modification_log[2].source_behavior == "rule_change_hypothesis");
}

TEST_CASE("order-sensitive 4-object runs: cg_db discovers reversed orderings") {
    int solved = 0, with_db1 = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const EpisodeConfig config = assign_roles(Condition::order_sensitive, 4, seed * 13);
        auto policy = make_scripted_policy(Tier::cg_db, 4);
        const EpisodeTrace trace =
            run_episode(config, ScaffoldingConfig::for_tier(Tier::cg_db), *policy);
        REQUIRE_FALSE(trace.aborted);
        if (trace.verdict && trace.verdict->correct) ++solved;
        for (const auto& f : trace.firings) {
            if (f.behavior_id == BehaviorId::exploration_stagnation) ++with_db1;
        }
    }
    // the 100-step budget fits a full reversed-pair sweep at 4 objects
    CHECK(solved == 10);
    CHECK(with_db1 == 10);  // nothing activates during singles, so DB1 always trips
}

TEST_CASE("stochastic episodes surface DB3 firings under the heuristic evaluator") {
    int db3_firings = 0, episodes_with_any_firing = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const EpisodeConfig config = assign_roles(Condition::stochastic, 5, seed * 7);
        auto policy = make_scripted_policy(Tier::cg_db, 5);
        const EpisodeTrace trace =
            run_episode(config, ScaffoldingConfig::for_tier(Tier::cg_db), *policy);
        REQUIRE_FALSE(trace.aborted);
        std::map<BehaviorId, int> per_behavior;
        for (const auto& f : trace.firings) {
            ++per_behavior[f.behavior_id];
            if (f.behavior_id == BehaviorId::stochasticity_hypothesis) ++db3_firings;
        }
        if (!trace.firings.empty()) ++episodes_with_any_firing;
        for (const auto& [id, count] : per_behavior) CHECK(count == 1);  // one-shot
    }
    CHECK(db3_firings > 0);
    CHECK(episodes_with_any_firing == 10);
}

TEST_CASE("trap policy constructs an exactly-N episode") {
    const EpisodeConfig config = hm_config(77, 3);
    auto trap = make_trap_policy(5, 3);
    const EpisodeTrace trace = run_episode(config, ScaffoldingConfig::for_tier(Tier::base), *trap);
    REQUIRE(trace.verdict.has_value());
    CHECK_FALSE(trace.verdict->correct);
    CHECK(trace.activation_count_final == 3);
    CHECK(trace.final_answer->claimed_blickets == config.blickets);
    CHECK(trace.final_answer->rule_type == RuleType::conjunctive);
}

TEST_CASE("garbage policies burn the budget as parse failures") {
    struct Garbage final : Policy {
        std::string decide(const PromptContext&) override { return "lorem ipsum"; }
    };
    EpisodeConfig config = assign_roles(Condition::conjunctive, 5, 2);
    config.step_budget = 12;
    Garbage policy;
    const EpisodeTrace trace = run_episode(config, ScaffoldingConfig::for_tier(Tier::base), policy);
    CHECK(trace.steps.size() == 12);
    CHECK_FALSE(trace.final_answer.has_value());
    CHECK_FALSE(trace.verdict.has_value());
    for (const auto& s : trace.steps) {
        CHECK_FALSE(s.parsed.parse_ok);
        CHECK(s.action.kind == ActionKind::noop);
    }
}

TEST_CASE("policy exceptions abort the episode with a reason") {
    struct Exploding final : Policy {
        std::string decide(const PromptContext&) override { throw PolicyError("timeout"); }
    };
    Exploding policy;
    const EpisodeTrace trace =
        run_episode(assign_roles(Condition::conjunctive, 5, 2), ScaffoldingConfig::for_tier(Tier::base),
                    policy);
    CHECK(trace.aborted);
    CHECK(trace.abort_reason->find("timeout") != std::string::npos);
    CHECK(trace.steps.empty());
}

TEST_CASE("replay: identical configs and deterministic policies give identical traces") {
    const EpisodeConfig config = hm_config(123);
    for (Tier tier : {Tier::base, Tier::cg, Tier::cg_db}) {
        auto p1 = make_scripted_policy(tier, 5);
        auto p2 = make_scripted_policy(tier, 5);
        const EpisodeTrace a = run_episode(config, ScaffoldingConfig::for_tier(tier), *p1);
        const EpisodeTrace b = run_episode(config, ScaffoldingConfig::for_tier(tier), *p2);
        CHECK(trace_to_string(a) == trace_to_string(b));
    }
}

TEST_CASE("external policy round-trips through a loopback server") {
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/decide", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        CHECK(req.body.find("system_text") != std::string::npos);
        CHECK(req.body.find("messages") != std::string::npos);
        res.set_content("REASONING: done\nACTION: check\nRULE_TYPE: conjunctive\nBLICKETS: A",
                        "text/plain");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread run([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    EndpointConfig endpoint{"http://127.0.0.1:" + std::to_string(port) + "/decide", 5.0};
    auto policy = make_external_policy(endpoint);
    const EpisodeConfig config = assign_roles(Condition::conjunctive, 5, 4);
    const EpisodeTrace trace = run_episode(config, ScaffoldingConfig::for_tier(Tier::base), *policy);
    CHECK(hits == 1);
    REQUIRE(trace.steps.size() == 1);
    CHECK(trace.final_answer.has_value());
    CHECK(trace.final_answer->claimed_blickets == ObjectSet{'A'});

    server.stop();
    run.join();
}

TEST_CASE("unreachable endpoints abort the trace; empty bodies are parse failures") {
    EndpointConfig dead{"http://127.0.0.1:1/decide", 0.2};
    auto policy = make_external_policy(dead);
    const EpisodeTrace trace = run_episode(assign_roles(Condition::conjunctive, 5, 4),
                                           ScaffoldingConfig::for_tier(Tier::base), *policy);
    CHECK(trace.aborted);
    CHECK(trace.abort_reason->find("policy-failure") != std::string::npos);

    httplib::Server server;
    server.Post("/decide", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content("", "text/plain");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread run([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    EndpointConfig empty{"http://127.0.0.1:" + std::to_string(port) + "/decide", 5.0};
    auto empty_policy = make_external_policy(empty);
    EpisodeConfig config = assign_roles(Condition::conjunctive, 5, 4);
    config.step_budget = 3;
    const EpisodeTrace t = run_episode(config, ScaffoldingConfig::for_tier(Tier::base), *empty_policy);
    CHECK_FALSE(t.aborted);
    for (const auto& s : t.steps) CHECK_FALSE(s.parsed.parse_ok);
    server.stop();
    run.join();
}

TEST_CASE("external evaluator parses decimal scores over the wire") {
    httplib::Server server;
    std::string last_body;
    server.Post("/evaluate", [&](const httplib::Request& req, httplib::Response& res) {
        last_body = req.body;
        res.set_content("7", "text/plain");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread run([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ExternalEvaluator evaluator({"http://127.0.0.1:" + std::to_string(port) + "/evaluate", 5.0});
    const auto behaviors = default_behaviors();
    CondensedContext ctx;
    ctx.current_state = "COMBINATION_TESTING";
    ctx.exploration_summary = "2 unique configurations tested";
    ctx.recent_messages.push_back({"user", "Detector: INACTIVE"});
    std::string error;
    const auto score = evaluator.score(behaviors.front(), ctx, {}, error);
    REQUIRE(score.has_value());
    CHECK(*score == doctest::Approx(7.0));
    CHECK(last_body.find("trigger_evaluation") != std::string::npos);
    CHECK(last_body.find("Rate how strongly this condition is met") != std::string::npos);
    server.stop();
    run.join();
}

TEST_CASE("prompt digests are stable and present") {
    const EpisodeConfig config = hm_config(5);
    auto policy = make_scripted_policy(Tier::cg, 5);
    const EpisodeTrace trace = run_episode(config, ScaffoldingConfig::for_tier(Tier::cg), *policy);
    for (const auto& s : trace.steps) {
        CHECK(s.prompt_digest.size() == 16);
        CHECK_FALSE(s.prompt_text.has_value());
    }
    ScaffoldingConfig with_prompts = ScaffoldingConfig::for_tier(Tier::cg);
    with_prompts.store_prompt_text = true;
    auto policy2 = make_scripted_policy(Tier::cg, 5);
    const EpisodeTrace sidecar = run_episode(config, with_prompts, *policy2);
    CHECK(sidecar.steps.front().prompt_text.has_value());
    CHECK(sidecar.steps.front().prompt_text->find("=== Context Graph ===") != std::string::npos);
}
