#include "blicket/metrics.hpp"

#include <algorithm>

namespace blicket {

const char* to_string(EpisodeCategory c) {
    switch (c) {
        case EpisodeCategory::pre_switch: return "pre_switch";
        case EpisodeCategory::exactly_n: return "exactly_n";
        case EpisodeCategory::reasoning_eligible: return "reasoning_eligible";
        case EpisodeCategory::not_applicable: return "not_applicable";
    }
    return "?";
}

EpisodeClassification classify_episode(const EpisodeTrace& trace) {
    EpisodeClassification c;
    c.activations_at_submission = trace.activation_count_final;
    if (trace.config.condition != Condition::hidden_moderator) {
        c.category = EpisodeCategory::not_applicable;
        return c;
    }
    const int n = *trace.config.switch_point;
    if (c.activations_at_submission < n) c.category = EpisodeCategory::pre_switch;
    else if (c.activations_at_submission == n) c.category = EpisodeCategory::exactly_n;
    else c.category = EpisodeCategory::reasoning_eligible;
    return c;
}

namespace {

bool is_correct(const EpisodeTrace& t) { return t.verdict && t.verdict->correct; }

void count_errors(const EpisodeTrace& t, ErrorBreakdown& e) {
    if (!t.verdict || t.verdict->correct) return;
    if (t.verdict->rule_type_error) ++e.rule_type;
    switch (t.verdict->object_set_error) {
        case ObjectSetError::over_inclusion: ++e.over_inclusion; break;
        case ObjectSetError::under_inclusion: ++e.under_inclusion; break;
        case ObjectSetError::mixed: ++e.mixed; break;
        case ObjectSetError::none: break;
    }
}

}  // namespace

RunSummary summarize_run(const std::vector<const EpisodeTrace*>& group) {
    if (group.empty()) throw MetricsError("empty trace group");
    RunSummary s;
    s.condition = group.front()->config.condition;
    s.tier = group.front()->scaffolding.tier;
    for (const auto* t : group) {
        if (t->config.condition != s.condition) {
            throw MetricsError("mixed-condition-group: expected " +
                               std::string(to_string(s.condition)) + ", found " +
                               to_string(t->config.condition));
        }
        if (t->scaffolding.tier != s.tier) {
            throw MetricsError("mixed-tier-group: expected " + std::string(to_string(s.tier)) +
                               ", found " + to_string(t->scaffolding.tier));
        }
    }

    s.n = static_cast<int>(group.size());
    std::vector<int> steps;
    long long parse_failures = 0;
    long long total_steps = 0;
    int triggered = 0, observed = 0;
    long long first_activation_sum = 0;
    int activated_episodes = 0;
    const bool hm = s.condition == Condition::hidden_moderator;

    for (const auto* t : group) {
        if (t->aborted) ++s.aborted;
        if (t->final_answer) ++s.answered;
        else ++s.no_answer;
        if (is_correct(*t)) ++s.raw_correct;
        steps.push_back(static_cast<int>(t->steps.size()));
        total_steps += static_cast<long long>(t->steps.size());
        for (const auto& step : t->steps) {
            if (!step.parsed.parse_ok) ++parse_failures;
        }
        for (const auto& step : t->steps) {
            if (step.observation.detector == DetectorStatus::active) {
                first_activation_sum += step.step_index;
                ++activated_episodes;
                break;
            }
        }
        count_errors(*t, s.errors);
        if (hm) {
            const auto c = classify_episode(*t);
            switch (c.category) {
                case EpisodeCategory::pre_switch: ++s.pre_switch; break;
                case EpisodeCategory::exactly_n: ++s.exactly_n; break;
                case EpisodeCategory::reasoning_eligible:
                    ++s.reasoning_eligible;
                    if (is_correct(*t)) ++s.re_correct;
                    break;
                case EpisodeCategory::not_applicable: break;
            }
            const int n_switch = *t->config.switch_point;
            if (c.activations_at_submission >= n_switch) ++triggered;
            if (c.activations_at_submission > n_switch) ++observed;
        }
    }

    s.answer_rate = static_cast<double>(s.answered) / s.n;
    s.raw_accuracy = static_cast<double>(s.raw_correct) / s.n;
    s.parse_failure_rate =
        total_steps == 0 ? 0.0 : static_cast<double>(parse_failures) / static_cast<double>(total_steps);

    std::sort(steps.begin(), steps.end());
    StepsSummary st;
    st.min = steps.front();
    st.max = steps.back();
    double sum = 0.0;
    for (int v : steps) sum += v;
    st.mean = sum / static_cast<double>(steps.size());
    const std::size_t mid = steps.size() / 2;
    st.median = steps.size() % 2 == 1
                    ? steps[mid]
                    : (static_cast<double>(steps[mid - 1]) + static_cast<double>(steps[mid])) / 2.0;
    s.steps_taken = st;
    if (activated_episodes > 0) {
        s.steps_to_first_activation_mean =
            static_cast<double>(first_activation_sum) / activated_episodes;
    }

    if (hm) {
        s.pre_switch_rate = static_cast<double>(s.pre_switch) / s.n;
        s.exactly_n_rate = static_cast<double>(s.exactly_n) / s.n;
        s.re_rate = static_cast<double>(s.reasoning_eligible) / s.n;
        if (s.reasoning_eligible > 0) {
            s.re_accuracy = static_cast<double>(s.re_correct) / s.reasoning_eligible;
        }
        s.switch_rate_triggered = static_cast<double>(triggered) / s.n;
        s.switch_rate_observed = static_cast<double>(observed) / s.n;
    }
    return s;
}

RunSummary summarize_run(const std::vector<EpisodeTrace>& group) {
    std::vector<const EpisodeTrace*> ptrs;
    ptrs.reserve(group.size());
    for (const auto& t : group) ptrs.push_back(&t);
    return summarize_run(ptrs);
}

DetectionStats detection_stats(const std::vector<const EpisodeTrace*>& traces, BehaviorId behavior) {
    DetectionStats d;
    for (const auto* t : traces) {
        ++d.episodes;
        const bool fired = std::any_of(t->firings.begin(), t->firings.end(),
                                       [&](const Firing& f) { return f.behavior_id == behavior; });
        const bool correct = is_correct(*t);
        if (t->switched) ++d.switched_episodes;
        if (fired) ++d.firings;
        if (t->switched && fired && correct) ++d.true_positives;
        else if (fired) ++d.false_positives;  // incorrect or not switched
        else if (t->switched && correct) ++d.false_negatives;
    }
    if (d.true_positives + d.false_negatives > 0) {
        d.sensitivity = static_cast<double>(d.true_positives) /
                        static_cast<double>(d.true_positives + d.false_negatives);
    }
    if (d.true_positives + d.false_positives > 0) {
        d.ppv = static_cast<double>(d.true_positives) /
                static_cast<double>(d.true_positives + d.false_positives);
    }
    return d;
}

DetectionStats detection_stats(const std::vector<EpisodeTrace>& traces, BehaviorId behavior) {
    std::vector<const EpisodeTrace*> ptrs;
    ptrs.reserve(traces.size());
    for (const auto& t : traces) ptrs.push_back(&t);
    return detection_stats(ptrs, behavior);
}

ErrorTaxonomyRow error_taxonomy(Tier tier, const std::vector<const EpisodeTrace*>& traces) {
    ErrorTaxonomyRow row;
    row.tier = tier;
    for (const auto* t : traces) {
        if (t->scaffolding.tier != tier) continue;
        const bool correct = is_correct(*t);
        if (correct) continue;
        ++row.total_errors;
        if (!t->final_answer) ++row.no_answer;
        const auto c = classify_episode(*t);
        if (c.category == EpisodeCategory::exactly_n) {
            ++row.exactly_n_errors;
            if (t->final_answer && t->final_answer->claimed_blickets == t->config.blickets) {
                ++row.exactly_n_pre_switch_answers;
            } else {
                row.exactly_n_all_pre_switch = false;
            }
        } else if (c.category == EpisodeCategory::reasoning_eligible) {
            ++row.re_errors;
            count_errors(*t, row.re_detail);
        }
    }
    return row;
}

}  // namespace blicket
