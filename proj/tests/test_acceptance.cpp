// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Tolerances are pinned in code next to each check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blicket/experiment.hpp"
#include "blicket/metrics.hpp"
#include "blicket/scripted.hpp"
#include "oracles.hpp"

using namespace blicket;

namespace {

struct Check {
    std::string label;
    std::function<void(std::vector<std::string>&)> body;  // push failure notes
};

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "<missing " + path.string() + ">";
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void expect(std::vector<std::string>& failures, bool ok, const std::string& note) {
    if (!ok) failures.push_back(note);
}

void expect_near(std::vector<std::string>& failures, const std::string& what, double got,
                 double target, double tolerance) {
    if (std::abs(got - target) > tolerance) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s: got %.6g, expected %.6g +/- %.3g", what.c_str(), got,
                      target, tolerance);
        failures.push_back(buf);
    }
}

// ---- criterion 1: statistics reproduction from the published tables ----------

void criterion_statistics(std::vector<std::string>& failures) {
    expect_near(failures, "Fisher two-sided RE accuracy (31/33 vs 22/30)",
                fisher_exact({31, 2, 22, 8}, FisherSided::two_sided), 0.038, 0.002);
    expect_near(failures, "Fisher directional exactly-N (14/50 vs 3/50)",
                fisher_exact({14, 36, 3, 47}, FisherSided::one_tailed_greater), 0.003, 0.001);
    expect_near(failures, "Cohen's h RE accuracy",
                std::abs(cohens_h(31.0 / 33.0, 22.0 / 30.0)), 0.59, 0.01);
    expect_near(failures, "Cohen's h exactly-N", std::abs(cohens_h(14.0 / 50.0, 3.0 / 50.0)), 0.62,
                0.01);
    const OrCi or_ci = odds_ratio_ci({14, 36, 3, 47});
    expect_near(failures, "exactly-N odds ratio", or_ci.odds_ratio, 6.09, 0.02);
    expect_near(failures, "exactly-N OR CI lower", or_ci.lower, 1.63, 0.02);
    expect_near(failures, "exactly-N OR CI upper", or_ci.upper, 22.82, 0.02);
    const CmhResult c = cmh({{23, 7, 23, 7}, {28, 2, 21, 9}, {45, 5, 41, 9}});
    expect_near(failures, "CMH common OR", c.common_or, 2.01, 0.03);
    expect_near(failures, "CMH CI lower", c.ci_lower, 0.98, 0.03);
    expect_near(failures, "CMH CI upper", c.ci_upper, 4.12, 0.03);
    expect_near(failures, "CMH p-value", c.p_value, 0.078, 0.005);
    BFRequest req;
    req.k1 = 98;
    req.n1 = 110;
    req.k2 = 85;
    req.n2 = 110;
    req.draws = 1000000;
    req.seed = 20250808ULL;
    const BFResult bf = bayes_factor(req);
    expect(failures, std::abs(bf.bf - 100.4) / 100.4 <= 0.15,
           "Bayes factor outside the 15% band: got " + std::to_string(bf.bf));
}

// ---- criterion 2: Fisher/BF oracle equivalence --------------------------------

void criterion_stat_oracles(std::vector<std::string>& failures) {
    long long tables = 0;
    for (long long n = 2; n <= 12; ++n) {
        for (long long a = 0; a <= n; ++a) {
            for (long long b = 0; a + b <= n; ++b) {
                for (long long c = 0; a + b + c <= n; ++c) {
                    const long long d = n - a - b - c;
                    if (a + b == 0 || c + d == 0) continue;
                    const ContingencyTable t{a, b, c, d};
                    for (FisherSided sided :
                         {FisherSided::two_sided, FisherSided::one_tailed_greater}) {
                        const double mine = fisher_exact(t, sided);
                        const double want = oracles::fisher_oracle(t, sided);
                        if (std::abs(mine - want) > 1e-9 * std::max(1.0, want)) {
                            failures.push_back("fisher mismatch on table " + std::to_string(a) + "," +
                                               std::to_string(b) + "," + std::to_string(c) + "," +
                                               std::to_string(d));
                            return;
                        }
                    }
                    ++tables;
                }
            }
        }
    }
    expect(failures, tables > 1000, "enumeration covered too few tables");

    BFRequest req;
    req.draws = 400000;
    req.seed = 9000;
    for (long long n1 = 1; n1 <= 5; ++n1) {
        for (long long k1 = 0; k1 <= n1; ++k1) {
            for (long long n2 = 1; n2 <= 5; ++n2) {
                for (long long k2 = 0; k2 <= n2; ++k2) {
                    req.k1 = k1;
                    req.n1 = n1;
                    req.k2 = k2;
                    req.n2 = n2;
                    req.seed += 1;
                    const double mc = bayes_factor(req).p_greater;
                    const double grid = oracles::bf_grid_p_greater(k1, n1, k2, n2, 100000);
                    // 1e-3 quadrature bound plus a 5-sigma band from the
                    // binomial standard error of P at this draw count
                    const double mc_band =
                        5.0 * std::sqrt(0.25 / static_cast<double>(req.draws));
                    if (std::abs(mc - grid) > 1e-3 + mc_band) {
                        char buf[120];
                        std::snprintf(buf, sizeof(buf),
                                      "BF posterior mass off grid at k1=%lld n1=%lld k2=%lld "
                                      "n2=%lld: mc %.5f grid %.5f",
                                      k1, n1, k2, n2, mc, grid);
                        failures.push_back(buf);
                    }
                }
            }
        }
    }
}

// ---- criterion 3: environment oracle equivalence ---------------------------------

void criterion_env_oracle(std::vector<std::string>& failures) {
    for (int count = 3; count <= 5; ++count) {
        const auto sequences = oracles::all_sequences(count);
        const auto rules = oracles::all_deterministic_rules(count);
        Rng rng(5);
        for (const auto& rule : rules) {
            for (const auto& seq : sequences) {
                const bool expected = oracles::rule_satisfied(rule, seq);
                const bool got =
                    evaluate_rule(rule, oracles::to_placement(seq), rng) == DetectorStatus::active;
                if (expected != got) {
                    failures.push_back("rule/placement mismatch against the truth-table oracle");
                    return;
                }
            }
        }
    }
    RuleSpec stochastic;
    stochastic.rule_type = RuleType::conjunctive;
    stochastic.active_blickets = {'A', 'B'};
    stochastic.activation_probability = 0.70;
    Rng rng(20250808ULL);
    const auto placement = oracles::to_placement({'A', 'B'});
    int active = 0;
    for (int i = 0; i < 10000; ++i) {
        if (evaluate_rule(stochastic, placement, rng) == DetectorStatus::active) ++active;
    }
    expect_near(failures, "stochastic activation frequency (10000 draws)", active / 10000.0, 0.70,
                0.02);
}

// ---- criterion 4: exactly-N trap by construction ----------------------------------

void criterion_exactly_n_trap(std::vector<std::string>& failures) {
    for (int n : {3, 5}) {
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            RoleOptions options;
            options.switch_point = n;
            const EpisodeConfig config =
                assign_roles(Condition::hidden_moderator, 5, seed * 31 + n, options);
            auto trap = make_trap_policy(5, n);
            const EpisodeTrace trace =
                run_episode(config, ScaffoldingConfig::for_tier(Tier::base), *trap);
            const std::string tag = " (N=" + std::to_string(n) + ", seed " + std::to_string(seed) + ")";
            if (!trace.verdict) {
                failures.push_back("no verdict" + tag);
                continue;
            }
            expect(failures, !trace.verdict->correct, "trap episode graded correct" + tag);
            expect(failures, trace.final_answer->claimed_blickets == config.blickets,
                   "trap answer is not the pre-switch blicket set" + tag);
            expect(failures, trace.final_answer->rule_type == RuleType::conjunctive,
                   "trap answer is not the pre-switch rule type" + tag);
            expect(failures, classify_episode(trace).category == EpisodeCategory::exactly_n,
                   "trap episode not classified exactly_n" + tag);
        }
    }
}

// ---- criterion 5: end-to-end scaffolding fixture -----------------------------------

void criterion_scaffolding(std::vector<std::string>& failures) {
    const auto behaviors = default_behaviors();
    auto min_steps_for = [&](BehaviorId id) {
        for (const auto& b : behaviors) {
            if (b.id == id) return b.min_steps;
        }
        return 0;
    };
    int re_episodes = 0, re_correct = 0, re_with_db4 = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        RoleOptions options;
        options.switch_point = 3;
        options.post_rule = PostRuleKind::easy_disjunctive;
        const EpisodeConfig config = assign_roles(Condition::hidden_moderator, 5, seed * 17, options);
        auto policy = make_scripted_policy(Tier::cg_db, 5);
        const EpisodeTrace trace =
            run_episode(config, ScaffoldingConfig::for_tier(Tier::cg_db), *policy);
        const std::string tag = " (seed " + std::to_string(seed) + ")";

        // one-shot firing and per-behavior minimum steps, DB4 never before step 10
        std::map<BehaviorId, int> fired_count;
        for (const auto& f : trace.firings) {
            ++fired_count[f.behavior_id];
            expect(failures, f.step >= min_steps_for(f.behavior_id),
                   std::string(to_string(f.behavior_id)) + " fired before its min_steps" + tag);
            if (f.behavior_id == BehaviorId::rule_change_hypothesis) {
                expect(failures, f.step >= 10, "DB4 fired before step 10" + tag);
            }
        }
        for (const auto& [id, count] : fired_count) {
            expect(failures, count == 1, std::string(to_string(id)) + " fired more than once" + tag);
        }

        if (classify_episode(trace).category == EpisodeCategory::reasoning_eligible) {
            ++re_episodes;
            if (trace.verdict && trace.verdict->correct) ++re_correct;
            if (fired_count.count(BehaviorId::rule_change_hypothesis)) ++re_with_db4;
        }
    }
    expect(failures, re_episodes > 0, "no reasoning-eligible episodes in the fixture");
    expect(failures, re_with_db4 == re_episodes,
           "DB4 fired in " + std::to_string(re_with_db4) + "/" + std::to_string(re_episodes) +
               " RE episodes, required 100%");
    expect(failures,
           re_episodes > 0 && static_cast<double>(re_correct) / re_episodes >= 0.90,
           "RE accuracy " + std::to_string(re_correct) + "/" + std::to_string(re_episodes) +
               " below the 90% scripted-strategy target");
}

// ---- criterion 6: classification partition over 1000 randomized episodes ------------

void criterion_partition(std::vector<std::string>& failures) {
    Rng rng(606060);
    std::map<Tier, std::vector<EpisodeTrace>> groups;
    int produced = 0;
    for (int i = 0; i < 1000; ++i) {
        RoleOptions options;
        options.switch_point = rng.next_below(2) == 0 ? 3 : 5;
        const EpisodeConfig config = assign_roles(Condition::hidden_moderator, 5,
                                                  100000 + static_cast<std::uint64_t>(i), options);
        Tier tier = Tier::base;
        std::unique_ptr<Policy> policy;
        switch (rng.next_below(4)) {
            case 0:
                policy = make_trap_policy(5, 1 + static_cast<int>(rng.next_below(6)));
                break;
            case 1:
                policy = make_scripted_policy(Tier::base, 5);
                break;
            case 2:
                tier = Tier::cg;
                policy = make_scripted_policy(Tier::cg, 5);
                break;
            default:
                tier = Tier::cg_db;
                policy = make_scripted_policy(Tier::cg_db, 5);
                break;
        }
        groups[tier].push_back(run_episode(config, ScaffoldingConfig::for_tier(tier), *policy));
        ++produced;
    }
    expect(failures, produced == 1000, "episode production fell short of 1000");

    for (const auto& [tier, traces] : groups) {
        const RunSummary s = summarize_run(traces);
        expect(failures, s.pre_switch + s.exactly_n + s.reasoning_eligible == s.n,
               std::string("partition violated for tier ") + to_string(tier));

        // independent per-episode tally, recounted from raw trace fields
        int pre = 0, exn = 0, re = 0, re_ok = 0, correct = 0, answered = 0;
        long long parse_failures = 0, steps = 0;
        for (const auto& t : traces) {
            const int n = *t.config.switch_point;
            const int acts = t.activation_count_final;
            const bool ok = t.verdict && t.verdict->correct;
            if (acts < n) ++pre;
            else if (acts == n) ++exn;
            else {
                ++re;
                if (ok) ++re_ok;
            }
            if (t.final_answer) ++answered;
            if (ok) ++correct;
            for (const auto& st : t.steps) {
                ++steps;
                if (!st.parsed.parse_ok) ++parse_failures;
            }
        }
        const std::string tag = std::string(" for tier ") + to_string(tier);
        expect(failures, s.pre_switch == pre, "pre-switch tally mismatch" + tag);
        expect(failures, s.exactly_n == exn, "exactly-N tally mismatch" + tag);
        expect(failures, s.reasoning_eligible == re, "RE tally mismatch" + tag);
        expect(failures, s.re_correct == re_ok, "RE-correct tally mismatch" + tag);
        expect(failures, s.raw_correct == correct, "raw-correct tally mismatch" + tag);
        expect(failures, s.answered == answered, "answer tally mismatch" + tag);
        const double pf_rate =
            steps == 0 ? 0.0 : static_cast<double>(parse_failures) / static_cast<double>(steps);
        expect(failures, std::abs(s.parse_failure_rate - pf_rate) < 1e-12,
               "parse failure rate mismatch" + tag);
    }
}

// ---- criterion 7: regression gate ---------------------------------------------------

void criterion_regression_gate(std::vector<std::string>& failures) {
    const std::filesystem::path reference = std::filesystem::path(CONFIG_DIR) / "reference_stats.json";
    std::ostringstream sink;
    const VerifyStatsResult ok = cmd_verify_stats(reference, 0.002, sink);
    expect(failures, ok.pass, "verify-stats failed on the pristine reference table");
    expect(failures, ok.checked == 18, "reference table entry count changed");

    nlohmann::json j;
    {
        std::ifstream in(reference);
        in >> j;
    }
    j["references"][0]["value"] = j["references"][0]["value"].get<double>() * 1.005;
    const auto dir = std::filesystem::temp_directory_path() / "blicket_acceptance_ref";
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "reference_stats.json");
        out << j.dump(2) << "\n";
    }
    const VerifyStatsResult perturbed = cmd_verify_stats(dir / "reference_stats.json", 0.002, sink);
    expect(failures, !perturbed.pass, "verify-stats accepted a 0.5% perturbation");
    expect(failures,
           perturbed.failures.size() == 1 &&
               perturbed.failures.front().key == j["references"][0]["key"].get<std::string>(),
           "perturbed key not named in the failure");
    std::filesystem::remove_all(dir);
}

// ---- criterion 8: replay determinism -------------------------------------------------

void criterion_replay(std::vector<std::string>& failures) {
    auto make_plan = [](const std::filesystem::path& dir, int workers) {
        RunPlan plan;
        plan.run_id = "acceptance_replay";
        plan.cells = {{Condition::hidden_moderator, Tier::base, 3},
                      {Condition::hidden_moderator, Tier::cg, 3},
                      {Condition::hidden_moderator, Tier::cg_db, 3},
                      {Condition::conjunctive, Tier::cg, 2},
                      {Condition::stochastic, Tier::cg_db, 2}};
        plan.base_seed = 4004;
        plan.workers = workers;
        plan.out_dir = dir;
        return plan;
    };
    const auto dir_a = std::filesystem::temp_directory_path() / "blicket_acceptance_a";
    const auto dir_b = std::filesystem::temp_directory_path() / "blicket_acceptance_b";
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
    std::ostringstream sink;
    cmd_run(make_plan(dir_a, 1), sink);
    cmd_run(make_plan(dir_b, 3), sink);
    cmd_analyze(dir_a, true, sink);
    cmd_analyze(dir_b, true, sink);

    expect(failures, read_file(dir_a / "manifest.json") == read_file(dir_b / "manifest.json"),
           "manifests differ between executions");
    for (int i = 0; i < 13; ++i) {
        if (read_file(dir_a / episode_file_name(i)) != read_file(dir_b / episode_file_name(i))) {
            failures.push_back("trace " + episode_file_name(i) + " differs between executions");
        }
    }
    for (const char* report : {"summary.csv", "classification.csv", "detection.csv", "errors.csv"}) {
        expect(failures,
               read_file(dir_a / "analysis" / report) == read_file(dir_b / "analysis" / report),
               std::string(report) + " differs between executions");
    }
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
}

}  // namespace

int main() {
    std::vector<Check> checks = {
        {"criterion 1: statistics reproduction from published tables", criterion_statistics},
        {"criterion 2: Fisher/Bayes-factor oracle equivalence", criterion_stat_oracles},
        {"criterion 3: environment oracle equivalence + stochastic frequency", criterion_env_oracle},
        {"criterion 4: exactly-N trap by construction (N in {3,5}, 20 seeds each)",
         criterion_exactly_n_trap},
        {"criterion 5: end-to-end scaffolding fixture (DB4 firing, one-shot, RE accuracy)",
         criterion_scaffolding},
        {"criterion 6: classification partition over 1000 randomized scripted episodes",
         criterion_partition},
        {"criterion 7: regression gate at 0.2% with 0.5% perturbation detection",
         criterion_regression_gate},
        {"criterion 8: replay determinism (byte-identical manifests and analysis)", criterion_replay},
    };

    int failed = 0;
    for (const auto& check : checks) {
        const auto start = std::chrono::steady_clock::now();
        std::vector<std::string> failures;
        try {
            check.body(failures);
        } catch (const std::exception& e) {
            failures.push_back(std::string("exception: ") + e.what());
        }
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
        if (failures.empty()) {
            std::printf("[PASS] %s (%lldms)\n", check.label.c_str(),
                        static_cast<long long>(elapsed));
        } else {
            ++failed;
            std::printf("[FAIL] %s (%lldms)\n", check.label.c_str(),
                        static_cast<long long>(elapsed));
            for (const auto& f : failures) std::printf("       - %s\n", f.c_str());
        }
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(checks.size()) - failed, checks.size());
    return failed;
}
