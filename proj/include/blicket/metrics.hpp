#pragma once
// Episode classification (pre-switch / exactly-N / reasoning-eligible),
// accuracy and error decomposition, run aggregation, and detection
// statistics. Pure functions over immutable traces.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "blicket/trace.hpp"

namespace blicket {

enum class EpisodeCategory { pre_switch, exactly_n, reasoning_eligible, not_applicable };

const char* to_string(EpisodeCategory c);

struct EpisodeClassification {
    EpisodeCategory category = EpisodeCategory::not_applicable;
    int activations_at_submission = 0;
};

// Activation count at submission (or at budget exhaustion) against the
// switch point N: < N pre-switch, == N exactly-N, > N reasoning-eligible.
EpisodeClassification classify_episode(const EpisodeTrace& trace);

struct ErrorBreakdown {
    int rule_type = 0;  // episodes with a rule-type error (may also carry an object error)
    int over_inclusion = 0;
    int under_inclusion = 0;
    int mixed = 0;
    bool operator==(const ErrorBreakdown&) const = default;
};

struct StepsSummary {
    double mean = 0.0;
    double median = 0.0;
    int min = 0;
    int max = 0;
};

struct RunSummary {
    Condition condition = Condition::conjunctive;
    Tier tier = Tier::base;
    int n = 0;
    int answered = 0;
    int no_answer = 0;
    int aborted = 0;
    int raw_correct = 0;
    double answer_rate = 0.0;
    double raw_accuracy = 0.0;  // unanswered episodes count as incorrect
    double parse_failure_rate = 0.0;
    StepsSummary steps_taken;
    // mean 1-based step index of the first ACTIVE observation, over episodes
    // that activated at least once
    std::optional<double> steps_to_first_activation_mean;
    // hidden-moderator classification; zero / absent elsewhere
    int pre_switch = 0;
    int exactly_n = 0;
    int reasoning_eligible = 0;
    int re_correct = 0;
    std::optional<double> re_accuracy;        // absent when re count is 0
    std::optional<double> pre_switch_rate;
    std::optional<double> exactly_n_rate;
    std::optional<double> re_rate;
    std::optional<double> switch_rate_triggered;  // activations >= N
    std::optional<double> switch_rate_observed;   // activations >  N
    ErrorBreakdown errors;
};

class MetricsError : public std::runtime_error {
public:
    explicit MetricsError(const std::string& what) : std::runtime_error(what) {}
};

// Group must share one condition and one tier (mixed-condition-group error).
RunSummary summarize_run(const std::vector<const EpisodeTrace*>& group);
RunSummary summarize_run(const std::vector<EpisodeTrace>& group);

struct DetectionStats {
    int episodes = 0;
    int switched_episodes = 0;
    int firings = 0;
    int true_positives = 0;   // switched, fired, correct
    int false_positives = 0;  // fired, but incorrect or not switched
    int false_negatives = 0;  // switched, correct, no firing
    std::optional<double> sensitivity;  // TP / (TP + FN), over post-switch correct episodes
    std::optional<double> ppv;          // TP / (TP + FP)
};

DetectionStats detection_stats(const std::vector<const EpisodeTrace*>& traces, BehaviorId behavior);
DetectionStats detection_stats(const std::vector<EpisodeTrace>& traces, BehaviorId behavior);

struct ErrorTaxonomyRow {
    Tier tier = Tier::base;
    int total_errors = 0;  // wrong answers + unanswered episodes
    int exactly_n_errors = 0;
    int re_errors = 0;
    int no_answer = 0;
    ErrorBreakdown re_detail;
    // checkable property, not an assumption: every exactly-N error submitted
    // the pre-switch blicket set
    int exactly_n_pre_switch_answers = 0;
    bool exactly_n_all_pre_switch = true;
};

ErrorTaxonomyRow error_taxonomy(Tier tier, const std::vector<const EpisodeTrace*>& traces);

}  // namespace blicket
