// blicketbench CLI: run experiment plans, analyze trace directories, verify
// the shipped reference statistics, and print effective configuration.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "blicket/agent.hpp"
#include "blicket/experiment.hpp"
#include "blicket/scripted.hpp"

namespace {

blicket::Condition parse_condition_flag(const std::string& s) {
    return blicket::condition_from_string(s);
}

blicket::Tier parse_tier_flag(const std::string& s) { return blicket::tier_from_string(s); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"blicketbench: blicket-detector benchmark engine and analysis pipeline"};
    app.require_subcommand(1);

    // ---- run -----------------------------------------------------------------
    auto* run = app.add_subcommand("run", "execute an episode matrix and store traces");
    std::string preset;
    std::string condition_name = "hidden_moderator";
    std::vector<std::string> tier_names{"base", "cg", "cg_db"};
    int episodes = 1;
    int object_count = 5;
    std::uint64_t seed = 1;
    int workers = 1;
    int switch_point = -1;
    int step_budget = -1;
    int trap = -1;
    std::string post_rule = "easy";
    std::string out_dir = "out/run";
    std::string run_policy = "scripted";
    std::string endpoint_url;
    std::string evaluator_name = "heuristic";
    double timeout = 30.0;
    bool store_prompts = false;
    run->add_option("--preset", preset, "named plan: smoke, run03, run04, run06, run06sw5, run08, run08c50, run10g");
    run->add_option("--condition", condition_name, "condition when no preset is given");
    run->add_option("--tiers", tier_names, "agent tiers (base, cg, cg_db)");
    run->add_option("--episodes", episodes, "episodes per cell");
    run->add_option("--objects", object_count, "object count (3, 4, or 5)");
    run->add_option("--seed", seed, "base seed; episode seeds are base + index");
    run->add_option("--workers", workers, "parallel episode workers");
    run->add_option("--switch-point", switch_point, "hidden moderator switch point N");
    run->add_option("--step-budget", step_budget, "step budget override");
    run->add_option("--trap", trap, "use the trap policy with this activation target");
    run->add_option("--post-rule", post_rule, "hidden moderator post-switch rule: easy | triple");
    run->add_option("--policy", run_policy, "policy: scripted | external");
    run->add_option("--endpoint", endpoint_url,
                    "external endpoint url (also BLICKET_ENDPOINT_URL)");
    run->add_option("--evaluator", evaluator_name, "trigger evaluator: heuristic | external");
    run->add_option("--timeout", timeout, "endpoint timeout in seconds");
    run->add_flag("--store-prompts", store_prompts, "store full prompt text in traces");
    run->add_option("--out", out_dir, "output directory");
    std::string graph_config, behavior_config, conditions_config;
    run->add_option("--graph-config", graph_config, "declarative context-graph file");
    run->add_option("--behavior-config", behavior_config, "declarative behavior-spec file");
    run->add_option("--conditions-config", conditions_config, "condition-defaults file");

    // ---- analyze -------------------------------------------------------------
    auto* analyze = app.add_subcommand("analyze", "aggregate a run directory into report files");
    std::string analyze_dir;
    bool strict = false;
    analyze->add_option("dir", analyze_dir, "run directory with manifest.json")->required();
    analyze->add_flag("--strict-schema", strict, "reject unknown trace fields");

    // ---- verify-stats ----------------------------------------------------------
    auto* verify = app.add_subcommand("verify-stats",
                                      "recompute the shipped reference statistics at 0.2% tolerance");
    std::string reference_file;
    double tolerance = 0.002;
    verify->add_option("--reference", reference_file, "reference table (default configs/reference_stats.json)");
    verify->add_option("--tolerance", tolerance, "relative tolerance");

    // ---- print-config ------------------------------------------------------------
    auto* print_config = app.add_subcommand("print-config", "print effective defaults and behavior specs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            blicket::RunPlan plan;
            if (!preset.empty()) {
                plan = blicket::preset_plan(preset);
            } else {
                const blicket::Condition condition = parse_condition_flag(condition_name);
                for (const auto& t : tier_names) {
                    plan.cells.push_back({condition, parse_tier_flag(t), episodes});
                }
                plan.run_id = condition_name;
            }
            if (run->count("--seed") || preset.empty()) plan.base_seed = seed;
            if (switch_point > 0) plan.overrides.switch_point = switch_point;
            if (step_budget > 0) plan.overrides.step_budget = step_budget;
            if (trap > 0) plan.overrides.trap_activations = trap;
            if (run->count("--objects")) plan.overrides.object_count = object_count;
            if (run->count("--post-rule")) {
                if (post_rule == "easy") plan.overrides.post_rule = blicket::PostRuleKind::easy_disjunctive;
                else if (post_rule == "triple") plan.overrides.post_rule = blicket::PostRuleKind::hard_conjunctive_triple;
                else throw blicket::ConfigError({"unknown post rule: " + post_rule});
            }
            plan.workers = workers;
            plan.store_prompts = store_prompts;
            if (!graph_config.empty()) plan.graph_config = graph_config;
            if (!behavior_config.empty()) plan.behavior_config = behavior_config;
            if (!conditions_config.empty()) plan.conditions_config = conditions_config;
            plan.policy = run_policy;
            plan.out_dir = out_dir;
            std::string url = endpoint_url;
            if (url.empty()) {
                if (const char* env = std::getenv("BLICKET_ENDPOINT_URL")) url = env;
            }
            if (!url.empty()) {
                blicket::EndpointConfig ep{url, timeout};
                plan.policy_endpoint = ep;
                plan.evaluator_endpoint = ep;
            }
            if (evaluator_name == "external") plan.evaluator = blicket::EvaluatorKind::external;
            const blicket::RunResult result = blicket::cmd_run(plan, std::cout);
            std::cout << result.episodes << " episodes -> " << result.dir.string() << " ("
                      << result.aborted << " aborted)\n";
            return result.any_cell_failed ? 1 : 0;
        }
        if (*analyze) {
            blicket::cmd_analyze(analyze_dir, strict, std::cout);
            return 0;
        }
        if (*verify) {
            std::filesystem::path ref = reference_file.empty()
                                            ? blicket::default_config_dir() / "reference_stats.json"
                                            : std::filesystem::path(reference_file);
            const auto result = blicket::cmd_verify_stats(ref, tolerance, std::cout);
            return result.pass ? 0 : 1;
        }
        if (*print_config) {
            const auto defaults = blicket::ConditionDefaults::builtin();
            std::cout << "condition defaults (version " << defaults.version << "):\n"
                      << "  standard budget: " << defaults.standard_budget << "\n"
                      << "  extended budgets: 3-obj " << defaults.extended_budget_3 << ", 4-obj "
                      << defaults.extended_budget_4 << ", 5-obj " << defaults.extended_budget_5 << "\n"
                      << "  blickets: conjunctive " << defaults.conjunctive_blickets
                      << ", disjunctive " << defaults.disjunctive_blickets << "\n"
                      << "  activation probability: " << defaults.activation_probability << "\n"
                      << "  switch point: " << defaults.switch_point << "\n"
                      << "  fire threshold: " << defaults.fire_threshold << ", margin "
                      << defaults.inhibition_margin << "\n\n";
            std::cout << "behaviors:\n";
            for (const auto& b : blicket::default_behaviors()) {
                std::cout << "  " << to_string(b.id) << ": min_steps " << b.min_steps
                          << ", fire_threshold " << b.fire_threshold;
                if (b.stagnation_threshold) std::cout << ", stagnation " << *b.stagnation_threshold;
                if (b.requires_never_activated) std::cout << ", requires never-activated";
                std::cout << " -> " << b.graph_patch.new_states.front().name << "\n";
            }
            std::cout << "\nbase context graph:\n\n"
                      << blicket::ContextGraph::base_graph().render();
            std::cout << "\npresets:";
            for (const auto& p : blicket::preset_names()) std::cout << " " << p;
            std::cout << "\n";
            return 0;
        }
    } catch (const blicket::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
