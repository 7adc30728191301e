#include "blicket/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "blicket/scripted.hpp"

namespace blicket {

using nlohmann::json;

std::vector<std::string> RunPlan::validate() const {
    std::vector<std::string> v;
    if (cells.empty()) v.push_back("plan has no cells");
    for (const auto& c : cells) {
        if (c.episodes < 1) v.push_back("cell episode count must be >= 1");
    }
    if (policy != "scripted" && policy != "external") {
        v.push_back("unknown policy kind: " + policy + " (expected scripted or external)");
    }
    if (policy == "external" && !policy_endpoint) v.push_back("external policy requires an endpoint");
    if (evaluator == EvaluatorKind::external && !evaluator_endpoint) {
        v.push_back("external evaluator requires an endpoint");
    }
    if (workers < 1) v.push_back("workers must be >= 1");
    if (out_dir.empty()) v.push_back("output directory not set");
    return v;
}

std::vector<std::string> preset_names() {
    return {"smoke", "run03", "run04", "run06", "run06sw5", "run08", "run08c50", "run10g"};
}

RunPlan preset_plan(const std::string& name) {
    RunPlan plan;
    plan.run_id = name;
    const std::vector<Tier> all_tiers{Tier::base, Tier::cg, Tier::cg_db};
    auto hm_cells = [&](int n) {
        for (Tier t : all_tiers) plan.cells.push_back({Condition::hidden_moderator, t, n});
    };
    if (name == "smoke") {
        plan.cells.push_back({Condition::conjunctive, Tier::cg, 1});
        plan.base_seed = 1;
    } else if (name == "run03") {
        // 5-object pilot across all four conditions, 30 episodes per cell
        for (Condition c : {Condition::hidden_moderator, Condition::stochastic,
                            Condition::order_sensitive, Condition::conjunctive}) {
            for (Tier t : all_tiers) plan.cells.push_back({c, t, 30});
        }
        plan.overrides.switch_point = 3;
        plan.base_seed = 137;
    } else if (name == "run04") {
        hm_cells(30);
        plan.overrides.switch_point = 3;
        plan.base_seed = 251;
    } else if (name == "run06") {
        hm_cells(50);
        plan.overrides.switch_point = 3;
        plan.base_seed = 601;
    } else if (name == "run06sw5") {
        hm_cells(50);
        plan.overrides.switch_point = 5;
        plan.base_seed = 605;
    } else if (name == "run08") {
        // hard conjunctive-triple post-switch rule, 75-step budget
        hm_cells(50);
        plan.overrides.switch_point = 3;
        plan.overrides.post_rule = PostRuleKind::hard_conjunctive_triple;
        plan.overrides.step_budget = 75;
        plan.base_seed = 801;
    } else if (name == "run08c50") {
        // runway compression companion: 50-step budget, base and cg_db
        plan.cells.push_back({Condition::hidden_moderator, Tier::base, 25});
        plan.cells.push_back({Condition::hidden_moderator, Tier::cg_db, 25});
        plan.overrides.switch_point = 3;
        plan.overrides.post_rule = PostRuleKind::hard_conjunctive_triple;
        plan.overrides.step_budget = 50;
        plan.base_seed = 851;
    } else if (name == "run10g") {
        // powered order-sensitive comparison: 4 objects, 100 steps, 2 tiers
        plan.cells.push_back({Condition::order_sensitive, Tier::base, 30});
        plan.cells.push_back({Condition::order_sensitive, Tier::cg_db, 30});
        plan.overrides.object_count = 4;
        plan.overrides.step_budget = 100;
        plan.base_seed = 1007;
    } else {
        throw ConfigError({"unknown preset: " + name});
    }
    return plan;
}

EpisodeConfig plan_episode_config(const RunPlan& plan, const CellSpec& cell, std::uint64_t seed) {
    RoleOptions options;
    if (plan.conditions_config) options.defaults = load_condition_defaults(*plan.conditions_config);
    if (plan.overrides.switch_point) options.switch_point = plan.overrides.switch_point;
    if (plan.overrides.step_budget) options.step_budget = plan.overrides.step_budget;
    if (plan.overrides.post_rule) options.post_rule = *plan.overrides.post_rule;
    const int object_count = plan.overrides.object_count.value_or(5);
    return assign_roles(cell.condition, object_count, seed, options);
}

namespace {

ScaffoldingConfig scaffolding_for(const RunPlan& plan, Tier tier) {
    ScaffoldingConfig scaf = ScaffoldingConfig::for_tier(tier, plan.evaluator);
    if (tier != Tier::base && plan.graph_config) {
        scaf.graph_template = load_graph_config(*plan.graph_config);
    }
    if (tier == Tier::cg_db && plan.behavior_config) {
        scaf.behavior_set = load_behavior_config(*plan.behavior_config);
    }
    scaf.evaluator_endpoint = plan.evaluator_endpoint;
    scaf.store_prompt_text = plan.store_prompts;
    return scaf;
}

std::unique_ptr<Policy> policy_for(const RunPlan& plan, const CellSpec& cell, int object_count) {
    if (plan.policy == "external") return make_external_policy(*plan.policy_endpoint);
    if (plan.overrides.trap_activations) {
        return make_trap_policy(object_count, *plan.overrides.trap_activations);
    }
    return make_scripted_policy(cell.tier, object_count);
}

}  // namespace

RunResult cmd_run(const RunPlan& plan, std::ostream& progress) {
    {
        auto v = plan.validate();
        if (!v.empty()) throw ConfigError(std::move(v));
    }

    struct Job {
        int index;
        CellSpec cell;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    int index = 0;
    for (const auto& cell : plan.cells) {
        for (int i = 0; i < cell.episodes; ++i) {
            jobs.push_back({index, cell, plan.base_seed + static_cast<std::uint64_t>(index)});
            ++index;
        }
    }

    std::vector<EpisodeTrace> traces(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    std::exception_ptr first_error;
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            const Job& job = jobs[i];
            try {
                const EpisodeConfig config = plan_episode_config(plan, job.cell, job.seed);
                const ScaffoldingConfig scaf = scaffolding_for(plan, job.cell.tier);
                auto policy = policy_for(plan, job.cell, config.object_count);
                traces[i] = run_episode(config, scaf, *policy);
            } catch (...) {
                std::lock_guard<std::mutex> lock(log_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
            if (traces[i].aborted) {
                std::lock_guard<std::mutex> lock(log_mutex);
                progress << "episode " << job.index << " aborted: "
                         << traces[i].abort_reason.value_or("unknown") << "\n";
            }
        }
    };
    const int worker_count = std::min<int>(plan.workers, static_cast<int>(jobs.size()));
    if (worker_count <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < worker_count; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    RunManifest manifest;
    manifest.run_id = plan.run_id;
    manifest.base_seed = plan.base_seed;
    manifest.policy = plan.policy;
    manifest.evaluator = plan.evaluator;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        manifest.episodes.push_back({jobs[i].index, episode_file_name(jobs[i].index), jobs[i].seed,
                                     jobs[i].cell.condition, jobs[i].cell.tier, traces[i].aborted});
    }
    store_run(plan.out_dir, traces, manifest);

    RunResult result;
    result.episodes = static_cast<int>(jobs.size());
    result.dir = plan.out_dir;
    for (const auto& t : traces) {
        if (t.aborted) ++result.aborted;
    }
    // a cell where every episode aborted counts as a failed cell
    std::size_t offset = 0;
    for (const auto& cell : plan.cells) {
        bool all_aborted = true;
        for (int i = 0; i < cell.episodes; ++i) {
            if (!traces[offset + static_cast<std::size_t>(i)].aborted) all_aborted = false;
        }
        if (all_aborted && cell.episodes > 0) result.any_cell_failed = true;
        offset += static_cast<std::size_t>(cell.episodes);
    }

    // per-cell tallies
    offset = 0;
    for (const auto& cell : plan.cells) {
        std::vector<const EpisodeTrace*> group;
        for (int i = 0; i < cell.episodes; ++i) group.push_back(&traces[offset + static_cast<std::size_t>(i)]);
        offset += static_cast<std::size_t>(cell.episodes);
        const RunSummary s = summarize_run(group);
        progress << to_string(cell.condition) << " / " << to_string(cell.tier) << ": " << s.raw_correct
                 << "/" << s.n << " correct";
        if (s.re_accuracy) {
            progress << ", RE " << s.re_correct << "/" << s.reasoning_eligible;
        }
        progress << "\n";
    }
    return result;
}

// ---- analysis emitters ----------------------------------------------------------

namespace {

std::string pct(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", value * 100.0);
    return buf;
}

std::string ratio_pct(int num, int den) {
    std::ostringstream out;
    out << num << "/" << den << " (" << pct(den == 0 ? 0.0 : static_cast<double>(num) / den) << ")";
    return out.str();
}

std::string csv_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string csv_opt(const std::optional<double>& v) { return v ? csv_double(*v) : std::string(); }

struct CellKey {
    Condition condition;
    Tier tier;
    bool operator<(const CellKey& o) const {
        if (condition != o.condition) return static_cast<int>(condition) < static_cast<int>(o.condition);
        return static_cast<int>(tier) < static_cast<int>(o.tier);
    }
};

}  // namespace

void cmd_analyze(const std::filesystem::path& run_dir, bool strict, std::ostream& log) {
    RunManifest manifest;
    const std::vector<EpisodeTrace> traces = load_run(run_dir, strict, &manifest);

    const std::filesystem::path out_dir = run_dir / "analysis";
    std::filesystem::create_directories(out_dir);

    std::map<CellKey, std::vector<const EpisodeTrace*>> cells;
    for (const auto& t : traces) cells[{t.config.condition, t.scaffolding.tier}].push_back(&t);

    std::ofstream txt(out_dir / "summary.txt", std::ios::binary);
    std::ofstream csv(out_dir / "summary.csv", std::ios::binary);
    csv << "condition,tier,n,answered,answer_rate,raw_correct,raw_accuracy,parse_failure_rate,"
           "steps_mean,steps_median,steps_to_first_activation_mean,pre_switch,exactly_n,"
           "reasoning_eligible,re_correct,re_accuracy,"
           "pre_switch_rate,exactly_n_rate,re_rate,switch_rate_triggered,switch_rate_observed,"
           "err_rule_type,err_over_inclusion,err_under_inclusion,err_mixed,aborted\n";

    txt << "Run: " << manifest.run_id << " (" << traces.size() << " episodes)\n";
    if (traces.empty()) {
        txt << "no episodes\n";
        log << "no episodes\n";
        return;
    }

    Condition last_condition = Condition::conjunctive;
    bool first_block = true;
    for (const auto& [key, group] : cells) {
        const RunSummary s = summarize_run(group);
        if (first_block || key.condition != last_condition) {
            txt << "\n== " << to_string(key.condition) << " ==\n";
            txt << std::left << std::setw(7) << "Agent" << std::setw(6) << "n" << std::setw(18)
                << "Raw Accuracy" << std::setw(18) << "RE Episode Rate" << std::setw(18)
                << "RE Accuracy" << std::setw(18) << "Exactly-N Rate" << "Answer Rate\n";
            last_condition = key.condition;
            first_block = false;
        }
        txt << std::left << std::setw(7) << to_string(key.tier) << std::setw(6) << s.n
            << std::setw(18) << ratio_pct(s.raw_correct, s.n);
        if (s.condition == Condition::hidden_moderator) {
            txt << std::setw(18) << ratio_pct(s.reasoning_eligible, s.n) << std::setw(18)
                << (s.re_accuracy ? ratio_pct(s.re_correct, s.reasoning_eligible) : std::string("-"))
                << std::setw(18) << ratio_pct(s.exactly_n, s.n);
        } else {
            txt << std::setw(18) << "-" << std::setw(18) << "-" << std::setw(18) << "-";
        }
        txt << ratio_pct(s.answered, s.n) << "\n";

        csv << to_string(s.condition) << ',' << to_string(s.tier) << ',' << s.n << ',' << s.answered
            << ',' << csv_double(s.answer_rate) << ',' << s.raw_correct << ','
            << csv_double(s.raw_accuracy) << ',' << csv_double(s.parse_failure_rate) << ','
            << csv_double(s.steps_taken.mean) << ',' << csv_double(s.steps_taken.median) << ','
            << csv_opt(s.steps_to_first_activation_mean) << ',' << s.pre_switch << ',' << s.exactly_n << ',' << s.reasoning_eligible << ',' << s.re_correct
            << ',' << csv_opt(s.re_accuracy) << ',' << csv_opt(s.pre_switch_rate) << ','
            << csv_opt(s.exactly_n_rate) << ',' << csv_opt(s.re_rate) << ','
            << csv_opt(s.switch_rate_triggered) << ',' << csv_opt(s.switch_rate_observed) << ','
            << s.errors.rule_type << ',' << s.errors.over_inclusion << ',' << s.errors.under_inclusion
            << ',' << s.errors.mixed << ',' << s.aborted << "\n";
    }

    // four-way decomposition (pre-switch correct / pre-switch wrong / exactly-N / RE correct / RE wrong)
    std::ofstream cls(out_dir / "classification.csv", std::ios::binary);
    cls << "condition,tier,pre_switch_correct,pre_switch_wrong,exactly_n,re_correct,re_wrong,"
           "not_applicable\n";
    for (const auto& [key, group] : cells) {
        int psc = 0, psw = 0, en = 0, rec = 0, rew = 0, na = 0;
        for (const auto* t : group) {
            const bool correct = t->verdict && t->verdict->correct;
            switch (classify_episode(*t).category) {
                case EpisodeCategory::pre_switch: (correct ? psc : psw)++; break;
                case EpisodeCategory::exactly_n: ++en; break;
                case EpisodeCategory::reasoning_eligible: (correct ? rec : rew)++; break;
                case EpisodeCategory::not_applicable: ++na; break;
            }
        }
        cls << to_string(key.condition) << ',' << to_string(key.tier) << ',' << psc << ',' << psw
            << ',' << en << ',' << rec << ',' << rew << ',' << na << "\n";
    }

    // DB detection stats for cg_db cells
    std::ofstream det(out_dir / "detection.csv", std::ios::binary);
    det << "condition,behavior,episodes,switched,firings,true_positives,false_positives,"
           "false_negatives,sensitivity,ppv\n";
    for (const auto& [key, group] : cells) {
        if (key.tier != Tier::cg_db) continue;
        for (BehaviorId b : {BehaviorId::exploration_stagnation, BehaviorId::order_hypothesis,
                             BehaviorId::stochasticity_hypothesis, BehaviorId::rule_change_hypothesis}) {
            const DetectionStats d = detection_stats(group, b);
            det << to_string(key.condition) << ',' << to_string(b) << ',' << d.episodes << ','
                << d.switched_episodes << ',' << d.firings << ',' << d.true_positives << ','
                << d.false_positives << ',' << d.false_negatives << ','
                << (d.sensitivity ? csv_double(*d.sensitivity) : std::string()) << ','
                << (d.ppv ? csv_double(*d.ppv) : std::string()) << "\n";
        }
    }

    // error taxonomy per condition x tier
    std::ofstream err(out_dir / "errors.csv", std::ios::binary);
    err << "condition,tier,total_errors,exactly_n_errors,re_errors,no_answer,re_rule_type,"
           "re_over_inclusion,re_under_inclusion,re_mixed,exactly_n_pre_switch_answers,"
           "exactly_n_all_pre_switch\n";
    for (const auto& [key, group] : cells) {
        const ErrorTaxonomyRow row = error_taxonomy(key.tier, group);
        err << to_string(key.condition) << ',' << to_string(key.tier) << ',' << row.total_errors << ','
            << row.exactly_n_errors << ',' << row.re_errors << ',' << row.no_answer << ','
            << row.re_detail.rule_type << ',' << row.re_detail.over_inclusion << ','
            << row.re_detail.under_inclusion << ',' << row.re_detail.mixed << ','
            << row.exactly_n_pre_switch_answers << ',' << (row.exactly_n_all_pre_switch ? 1 : 0)
            << "\n";
    }

    log << "analysis written to " << out_dir.string() << "\n";
}

// ---- reference statistics ---------------------------------------------------------

std::vector<ReferenceEntry> load_reference_table(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError({"missing reference table: " + file.string()});
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError({"reference table is not valid JSON: " + std::string(e.what())});
    }
    std::vector<ReferenceEntry> out;
    for (const auto& je : j.at("references")) {
        ReferenceEntry e;
        e.key = je.at("key").get<std::string>();
        e.kind = je.at("kind").get<std::string>();
        e.value = je.at("value").get<double>();
        if (je.contains("tables")) {
            for (const auto& jt : je.at("tables")) {
                e.tables.push_back({jt.at("a").get<long long>(), jt.at("b").get<long long>(),
                                    jt.at("c").get<long long>(), jt.at("d").get<long long>()});
            }
        }
        if (je.contains("p1")) e.p1 = je.at("p1").get<double>();
        if (je.contains("p2")) e.p2 = je.at("p2").get<double>();
        if (je.contains("bf")) {
            const auto& jb = je.at("bf");
            e.bf.k1 = jb.at("k1").get<long long>();
            e.bf.n1 = jb.at("n1").get<long long>();
            e.bf.k2 = jb.at("k2").get<long long>();
            e.bf.n2 = jb.at("n2").get<long long>();
            e.bf.draws = jb.at("draws").get<long long>();
            e.bf.seed = jb.at("seed").get<std::uint64_t>();
            e.bf.convention = jb.at("convention").get<std::string>() == "prob_over_half"
                                  ? BfConvention::prob_over_half
                                  : BfConvention::posterior_odds;
        }
        out.push_back(std::move(e));
    }
    return out;
}

double recompute_reference(const ReferenceEntry& e) {
    if (e.kind == "fisher_two_sided") return fisher_exact(e.tables.at(0), FisherSided::two_sided);
    if (e.kind == "fisher_one_tailed") return fisher_exact(e.tables.at(0), FisherSided::one_tailed_greater);
    if (e.kind == "cohens_h") return std::abs(cohens_h(e.p1, e.p2));
    if (e.kind == "or_point") return odds_ratio_ci(e.tables.at(0)).odds_ratio;
    if (e.kind == "or_ci_lower") return odds_ratio_ci(e.tables.at(0)).lower;
    if (e.kind == "or_ci_upper") return odds_ratio_ci(e.tables.at(0)).upper;
    if (e.kind == "cmh_p") return cmh(e.tables).p_value;
    if (e.kind == "cmh_or") return cmh(e.tables).common_or;
    if (e.kind == "cmh_ci_lower") return cmh(e.tables).ci_lower;
    if (e.kind == "cmh_ci_upper") return cmh(e.tables).ci_upper;
    if (e.kind == "bf_posterior_odds" || e.kind == "bf_prob_over_half") return bayes_factor(e.bf).bf;
    throw ConfigError({"unknown reference kind: " + e.kind});
}

VerifyStatsResult cmd_verify_stats(const std::filesystem::path& reference_file, double tolerance,
                                   std::ostream& log) {
    const auto entries = load_reference_table(reference_file);
    std::map<std::string, double> reference, recomputed;
    for (const auto& e : entries) {
        reference[e.key] = e.value;
        recomputed[e.key] = recompute_reference(e);
    }
    const RegressionOutcome outcome = regression_check(reference, recomputed, tolerance);

    VerifyStatsResult result;
    result.pass = outcome.pass;
    result.checked = static_cast<int>(entries.size());
    result.failures = outcome.failures;

    log << "verify-stats: " << entries.size() << " reference values, tolerance "
        << tolerance * 100.0 << "%\n";
    for (const auto& e : entries) {
        const double rec = recomputed[e.key];
        const double rel = std::abs(e.value - rec) / std::max(std::abs(e.value), 1e-300);
        log << "  " << (rel <= tolerance ? "ok   " : "FAIL ") << e.key << ": reference "
            << std::setprecision(4) << e.value << ", recomputed " << rec << " (rel "
            << std::setprecision(3) << rel << ")\n";
    }
    log << (result.pass ? "verify-stats: PASS\n" : "verify-stats: FAIL\n");
    return result;
}

std::filesystem::path default_config_dir() {
    if (const char* env = std::getenv("BLICKET_CONFIG_DIR")) return env;
    return "configs";
}

namespace {

json parse_config_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError({"missing config file: " + file.string()});
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw ConfigError({file.string() + " is not valid JSON: " + e.what()});
    }
}

}  // namespace

ConditionDefaults load_condition_defaults(const std::filesystem::path& file) {
    const json j = parse_config_file(file);
    ConditionDefaults d;
    d.version = j.at("version").get<std::string>();
    d.standard_budget = j.at("standard_budget").get<int>();
    d.extended_budget_3 = j.at("extended_budget_3").get<int>();
    d.extended_budget_4 = j.at("extended_budget_4").get<int>();
    d.extended_budget_5 = j.at("extended_budget_5").get<int>();
    d.conjunctive_blickets = j.at("conjunctive_blickets").get<int>();
    d.disjunctive_blickets = j.at("disjunctive_blickets").get<int>();
    d.activation_probability = j.at("activation_probability").get<double>();
    d.switch_point = j.at("switch_point").get<int>();
    d.fire_threshold = j.at("fire_threshold").get<double>();
    d.inhibition_margin = j.at("inhibition_margin").get<double>();
    return d;
}

ContextGraph load_graph_config(const std::filesystem::path& file) {
    return ContextGraph::from_json(parse_config_file(file));
}

std::vector<BehaviorSpec> load_behavior_config(const std::filesystem::path& file) {
    return behaviors_from_json(parse_config_file(file));
}

}  // namespace blicket
