#pragma once
// Batch experiment runner and analysis front-end: run plans and presets,
// episode-matrix execution with worker-pool parallelism, paper-style report
// emission, and the reference-statistics regression gate.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "blicket/agent.hpp"
#include "blicket/metrics.hpp"
#include "blicket/stats.hpp"
#include "blicket/trace.hpp"

namespace blicket {

struct CellSpec {
    Condition condition = Condition::hidden_moderator;
    Tier tier = Tier::base;
    int episodes = 1;
};

struct PlanOverrides {
    std::optional<int> switch_point;
    std::optional<int> step_budget;
    std::optional<int> object_count;  // default 5
    std::optional<PostRuleKind> post_rule;
    std::optional<int> trap_activations;  // use the trap policy with this target
};

struct RunPlan {
    std::string run_id = "run";
    std::vector<CellSpec> cells;
    PlanOverrides overrides;
    std::uint64_t base_seed = 1;
    EvaluatorKind evaluator = EvaluatorKind::heuristic;
    std::optional<EndpointConfig> evaluator_endpoint;
    std::string policy = "scripted";  // scripted | external
    std::optional<EndpointConfig> policy_endpoint;
    int workers = 1;
    bool store_prompts = false;
    std::filesystem::path out_dir;
    // declarative overrides; the built-in defaults apply when unset
    std::optional<std::filesystem::path> graph_config;
    std::optional<std::filesystem::path> behavior_config;
    std::optional<std::filesystem::path> conditions_config;

    std::vector<std::string> validate() const;
};

// presets: smoke, run03, run04, run06, run06sw5, run08, run08c50, run10g
RunPlan preset_plan(const std::string& name);
std::vector<std::string> preset_names();

struct RunResult {
    int episodes = 0;
    int aborted = 0;
    bool any_cell_failed = false;  // a whole cell aborted
    std::filesystem::path dir;
};

// Executes the plan (episode seeds = base_seed + global episode index),
// stores traces + manifest. Deterministic output regardless of workers.
RunResult cmd_run(const RunPlan& plan, std::ostream& progress);

// Builds the EpisodeConfig for one plan episode; exposed for tests.
EpisodeConfig plan_episode_config(const RunPlan& plan, const CellSpec& cell, std::uint64_t seed);

// Emits summary.txt / summary.csv / classification.csv / detection.csv /
// errors.csv under <run_dir>/analysis. Pure function of the trace directory.
void cmd_analyze(const std::filesystem::path& run_dir, bool strict, std::ostream& log);

struct ReferenceEntry {
    std::string key;
    std::string kind;  // fisher_two_sided | fisher_one_tailed | cohens_h | or_point |
                       // or_ci_lower | or_ci_upper | cmh_p | cmh_or | cmh_ci_lower |
                       // cmh_ci_upper | bf_posterior_odds
    double value = 0.0;
    // inputs, meaning depends on kind
    std::vector<ContingencyTable> tables;
    double p1 = 0.0, p2 = 0.0;
    BFRequest bf;
};

std::vector<ReferenceEntry> load_reference_table(const std::filesystem::path& file);
double recompute_reference(const ReferenceEntry& entry);

struct VerifyStatsResult {
    bool pass = false;
    int checked = 0;
    std::vector<RegressionFailure> failures;
};

// Recomputes every shipped reference statistic and applies the 0.2% gate.
VerifyStatsResult cmd_verify_stats(const std::filesystem::path& reference_file, double tolerance,
                                   std::ostream& log);

// configs/ directory resolution: explicit flag > BLICKET_CONFIG_DIR > ./configs
std::filesystem::path default_config_dir();

// declarative config loaders (shipped defaults mirror the built-ins)
ConditionDefaults load_condition_defaults(const std::filesystem::path& file);
ContextGraph load_graph_config(const std::filesystem::path& file);
std::vector<BehaviorSpec> load_behavior_config(const std::filesystem::path& file);

}  // namespace blicket
