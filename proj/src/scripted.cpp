#include "blicket/scripted.hpp"

#include <algorithm>
#include <deque>
#include <optional>
#include <set>
#include <sstream>

namespace blicket {

namespace {

enum class Expect { none, active, inactive };

// classifies the observation that follows a turn
enum class Tag {
    none,
    single_result,   // obj_a alone on the detector
    pair_result,     // pair (obj_a, obj_b) just completed
    grow_result,     // obj_a just added cumulatively
    shrink_remove,   // obj_a removed from the working set
    shrink_replace,  // obj_a placed back after an inactive probe
    confirm,
    order_result,    // reversed pair, obj_a placed second
    check_sent,
};

struct Turn {
    std::string action;                      // "place A" | "remove A" | "noop" | "check"
    std::optional<std::string> want_state;   // TRANSITION target, skipped if already there
    std::string reasoning;
    Expect expect = Expect::none;
    Tag tag = Tag::none;
    char obj_a = 0;
    char obj_b = 0;
};

class ScriptedPolicy final : public Policy {
public:
    ScriptedPolicy(Tier tier, int object_count, std::optional<int> trap_target,
                   bool clear_before_check)
        : tier_(tier),
          objects_(object_names(object_count)),
          trap_target_(trap_target),
          clear_before_check_(clear_before_check) {
        for (std::size_t i = 0; i < objects_.size(); ++i) {
            for (std::size_t j = i + 1; j < objects_.size(); ++j) {
                pairs_.emplace_back(objects_[i], objects_[j]);
            }
        }
        if (tier_ != Tier::base) state_ = "INITIAL_EXPLORATION";
        plan_singles();
    }

    std::string decide(const PromptContext& ctx) override {
        track_transition_feedback(ctx);
        const std::optional<bool> active = last_detector_active(ctx);
        if (active) record_result(*active);
        scan_notifications(ctx);
        if (violation_) handle_violation(ctx);

        // nearly out of budget: commit while a check still fits
        if (steps_remaining(ctx) <= 2 && hypothesis_ && !checked_ &&
            (plan_.empty() || plan_.front().tag != Tag::check_sent)) {
            plan_.clear();
            push_check(ctx);
        }
        if (plan_.empty()) refill(ctx);
        if (plan_.empty()) push_idle();

        Turn turn = plan_.front();
        plan_.pop_front();
        apply_to_mirror(turn);
        std::string reply = format(turn);
        last_ = std::move(turn);
        return reply;
    }

private:
    // ---- reading the conversation ---------------------------------------------

    static std::optional<bool> parse_detector(const std::string& text) {
        if (text.find("Detector: ACTIVE") != std::string::npos) return true;
        if (text.find("Detector: INACTIVE") != std::string::npos) return false;
        return std::nullopt;
    }

    std::optional<bool> last_detector_active(const PromptContext& ctx) const {
        for (auto it = ctx.history.rbegin(); it != ctx.history.rend(); ++it) {
            if (it->role != "user") continue;
            return parse_detector(it->content);
        }
        return std::nullopt;
    }

    void track_transition_feedback(const PromptContext& ctx) {
        for (auto it = ctx.history.rbegin(); it != ctx.history.rend(); ++it) {
            if (it->role != "user") continue;
            const auto pos = it->content.find("(transition to ");
            if (pos != std::string::npos) {
                const auto rest = it->content.substr(pos + 15);
                const auto space = rest.find(' ');
                if (space != std::string::npos && rest.compare(space, 9, " accepted") == 0) {
                    state_ = rest.substr(0, space);
                }
            }
            return;
        }
    }

    int steps_remaining(const PromptContext& ctx) const {
        for (auto it = ctx.history.rbegin(); it != ctx.history.rend(); ++it) {
            if (it->role != "user") continue;
            const auto pos = it->content.find("Steps remaining: ");
            if (pos != std::string::npos) return std::atoi(it->content.c_str() + pos + 17);
            break;
        }
        return 1 << 20;
    }

    static std::set<std::string> reachable_states(const PromptContext& ctx) {
        std::set<std::string> out;
        if (!ctx.graph_rendering) return out;
        std::istringstream lines(*ctx.graph_rendering);
        std::string line;
        bool in_transitions = false;
        while (std::getline(lines, line)) {
            if (line == "Transitions:") {
                in_transitions = true;
                continue;
            }
            if (!in_transitions) continue;
            const auto arrow = line.find("-> ");
            if (arrow == std::string::npos) break;
            const auto colon = line.find(':', arrow);
            if (colon == std::string::npos) continue;
            out.insert(line.substr(arrow + 3, colon - arrow - 3));
        }
        return out;
    }

    // ---- evidence handlers -----------------------------------------------------

    void record_result(bool active) {
        if (active) ++acts_seen_;
        if (!last_) return;
        const Turn turn = *last_;
        last_.reset();

        if ((turn.expect == Expect::active && !active) ||
            (turn.expect == Expect::inactive && active)) {
            violation_ = true;
        }

        switch (turn.tag) {
            case Tag::single_result:
                if (active) single_active_.insert(turn.obj_a);
                break;
            case Tag::pair_result:
            case Tag::order_result:
                if (active) {
                    plan_.clear();  // the pending reset turns are obsolete
                    hypothesis_ = Answer{RuleType::conjunctive, {turn.obj_a, turn.obj_b}};
                }
                break;
            case Tag::grow_result:
                if (active) {
                    plan_.clear();
                    shrink_targets_.clear();
                    for (char o : on_detector_) {
                        if (o != turn.obj_a) shrink_targets_.push_back(o);  // last added is needed
                    }
                    shrink_idx_ = 0;
                    shrinking_ = true;
                    plan_next_shrink_probe();
                }
                break;
            case Tag::shrink_remove:
                if (active) {
                    plan_next_shrink_probe();  // object was unnecessary
                } else {
                    plan_.push_front(make_turn("place " + std::string(1, turn.obj_a),
                                               "It was needed; putting it back.", Expect::active,
                                               Tag::shrink_replace, turn.obj_a));
                }
                break;
            case Tag::shrink_replace:
                if (!violation_) plan_next_shrink_probe();
                break;
            case Tag::confirm:
                // trap mode checks the moment the activation target is met
                if (trap_target_ && hypothesis_ && acts_seen_ >= *trap_target_) plan_.clear();
                break;
            default:
                break;
        }
    }

    void scan_notifications(const PromptContext& ctx) {
        for (const auto& note : ctx.pending_notifications) {
            if (note.find("MODERATOR_DETECTION") != std::string::npos) {
                recovery_available_ = true;
                notified_states_.push_back("MODERATOR_DETECTION");
            } else if (note.find("RELIABILITY_TESTING") != std::string::npos) {
                recovery_available_ = true;
                notified_states_.push_back("RELIABILITY_TESTING");
            } else if (note.find("DIMENSION_DISCOVERY") != std::string::npos) {
                order_flag_ = true;
                notified_states_.push_back("DIMENSION_DISCOVERY");
            } else if (note.find("ORDER_TESTING") != std::string::npos) {
                order_flag_ = true;
                notified_states_.push_back("ORDER_TESTING");
            }
        }
    }

    void handle_violation(const PromptContext& ctx) {
        violation_ = false;
        if (checked_) return;
        if (tier_ == Tier::cg_db && recovery_available_ && !recovered_once_) {
            start_recovery(ctx);
            return;
        }
        // base and cg commit to the current hypothesis instead of re-exploring
        plan_.clear();
        if (hypothesis_) push_check(ctx);
        else push_idle();
    }

    void start_recovery(const PromptContext& ctx) {
        recovered_once_ = true;
        recovering_ = true;
        plan_.clear();
        single_active_.clear();
        hypothesis_.reset();
        singles_evaluated_ = false;
        confirm_planned_ = false;
        shrinking_ = false;
        grow_planned_ = false;
        pair_idx_ = pairs_.size();  // pairs were the pre-change evidence; go straight to grow

        std::optional<std::string> goto_state;
        const auto reachable = reachable_states(ctx);
        for (auto it = notified_states_.rbegin(); it != notified_states_.rend(); ++it) {
            if (reachable.count(*it)) {
                goto_state = *it;
                break;
            }
        }
        if (!goto_state && !notified_states_.empty()) goto_state = notified_states_.back();

        // clear the detector, then re-test everything from scratch
        bool first = true;
        const std::vector<char> held(on_detector_.rbegin(), on_detector_.rend());
        for (char o : held) {
            Turn t = make_turn("remove " + std::string(1, o),
                               "The established rule stopped working; clearing the detector to re-test.",
                               Expect::none, Tag::none, o);
            if (first) t.want_state = goto_state;
            first = false;
            plan_.push_back(std::move(t));
        }
        if (held.empty()) {
            Turn t = make_turn("noop", "The established rule stopped working; re-testing from scratch.",
                               Expect::none, Tag::none);
            t.want_state = goto_state;
            plan_.push_back(std::move(t));
        }
        plan_singles_turns();
    }

    // ---- planning ----------------------------------------------------------------

    Turn make_turn(std::string action, std::string reasoning, Expect expect, Tag tag, char a = 0,
                   char b = 0) {
        Turn t;
        t.action = std::move(action);
        t.reasoning = std::move(reasoning);
        t.expect = expect;
        t.tag = tag;
        t.obj_a = a;
        t.obj_b = b;
        return t;
    }

    void plan_singles() {
        singles_planned_ = true;
        plan_singles_turns();
    }

    void plan_singles_turns() {
        for (char o : objects_) {
            plan_.push_back(make_turn("place " + std::string(1, o),
                                      std::string("Testing object ") + o + " alone.", Expect::none,
                                      Tag::single_result, o));
            plan_.push_back(make_turn("remove " + std::string(1, o),
                                      "Clearing the detector before the next test.", Expect::none,
                                      Tag::none, o));
        }
    }

    void plan_next_shrink_probe() {
        if (shrink_idx_ < shrink_targets_.size()) {
            const char z = shrink_targets_[shrink_idx_++];
            plan_.push_back(make_turn("remove " + std::string(1, z),
                                      std::string("Is ") + z + " actually required?", Expect::none,
                                      Tag::shrink_remove, z));
            return;
        }
        shrinking_ = false;
        ObjectSet set(on_detector_.begin(), on_detector_.end());
        // a surviving singleton behaves disjunctively; conjunctive needs >= 2
        const RuleType type = set.size() == 1 ? RuleType::disjunctive : RuleType::conjunctive;
        hypothesis_ = Answer{type, std::move(set)};
    }

    void plan_confirm(int noops) {
        // make sure the hypothesized configuration is actually on the detector
        if (hypothesis_) {
            bool any_present = false;
            for (char o : on_detector_) any_present |= hypothesis_->claimed_blickets.count(o) > 0;
            if (!any_present) {
                const char first = *hypothesis_->claimed_blickets.begin();
                Turn t = make_turn("place " + std::string(1, first),
                                   "Re-creating the configuration that activated.", Expect::active,
                                   Tag::confirm, first);
                if (!recovering_) t.want_state = "COMBINATION_TESTING";
                plan_.push_back(std::move(t));
            }
        }
        for (int i = 0; i < noops; ++i) {
            plan_.push_back(make_turn("noop", "Re-checking that the configuration still activates.",
                                      Expect::active, Tag::confirm));
        }
    }

    void push_check(const PromptContext& ctx) {
        Turn t = make_turn("check", "Committing to the final answer.", Expect::none, Tag::check_sent);
        if (tier_ != Tier::base) {
            const auto reachable = reachable_states(ctx);
            if (reachable.count("VERIFICATION")) t.want_state = "VERIFICATION";
        }
        plan_.push_back(std::move(t));
    }

    void push_check_blind() {
        plan_.push_back(
            make_turn("check", "Committing to the final answer.", Expect::none, Tag::check_sent));
    }

    void push_idle() {
        plan_.push_back(
            make_turn("noop", "No consistent hypothesis yet; observing.", Expect::none, Tag::none));
    }

    void refill(const PromptContext& ctx) {
        if (checked_) {
            push_idle();
            return;
        }
        if (singles_planned_ && !singles_evaluated_) {
            singles_evaluated_ = true;
            if (!single_active_.empty()) {
                hypothesis_ = Answer{RuleType::disjunctive, single_active_};
                // fall through to the hypothesis branch below
            } else {
                plan_pair_search();
                return;
            }
        }
        if (hypothesis_) {
            if (trap_target_) {
                if (acts_seen_ >= *trap_target_) {
                    if (clear_before_check_) {
                        // the check itself evaluates the detector; clear it so
                        // the submission cannot rack up another activation
                        const std::vector<char> held(on_detector_.rbegin(), on_detector_.rend());
                        for (char o : held) {
                            plan_.push_back(make_turn("remove " + std::string(1, o),
                                                      "Clearing the detector before answering.",
                                                      Expect::none, Tag::none, o));
                        }
                    }
                    push_check_blind();
                } else {
                    plan_confirm(1);
                }
                return;
            }
            if (!confirm_planned_) {
                confirm_planned_ = true;
                plan_confirm(2);
                return;
            }
            if (recovering_) {
                push_check(ctx);
                return;
            }
            if (!reflected_) {
                reflected_ = true;
                Turn t = make_turn("noop", "Summarizing the evidence for this hypothesis.",
                                   Expect::active, Tag::none);
                if (tier_ != Tier::base) t.want_state = "HYPOTHESIS_EVALUATION";
                plan_.push_back(std::move(t));
                return;
            }
            if (!verified_) {
                verified_ = true;
                const char probe = *hypothesis_->claimed_blickets.begin();
                Turn t1 = make_turn("remove " + std::string(1, probe),
                                    "Discriminating test: removing a hypothesized blicket.",
                                    Expect::inactive, Tag::none, probe);
                if (tier_ != Tier::base) t1.want_state = "VERIFICATION";
                plan_.push_back(std::move(t1));
                plan_.push_back(make_turn("place " + std::string(1, probe),
                                          "Restoring the configuration.", Expect::active, Tag::none,
                                          probe));
                push_check(ctx);
                return;
            }
            push_check(ctx);
            return;
        }
        if (!grow_planned_) {
            plan_pair_search();  // next pair, or grow once the pairs are exhausted
            return;
        }
        if (!shrinking_ && tier_ == Tier::cg_db && order_flag_ && !order_sweep_done_) {
            plan_order_sweep(ctx);
            return;
        }
        push_idle();
    }

    void plan_pair_search() {
        if (pair_idx_ < pairs_.size()) {
            const auto [a, b] = pairs_[pair_idx_];
            const bool first_pair = pair_idx_ == 0;
            ++pair_idx_;
            Turn t1 = make_turn("place " + std::string(1, a),
                                std::string("Pair test: ") + a + " with " + b + ".", Expect::none,
                                Tag::none, a);
            if (first_pair) t1.want_state = "COMBINATION_TESTING";
            plan_.push_back(std::move(t1));
            plan_.push_back(make_turn("place " + std::string(1, b),
                                      std::string("Completing the pair ") + a + "+" + b + ".",
                                      Expect::none, Tag::pair_result, a, b));
            plan_.push_back(make_turn("remove " + std::string(1, a), "Resetting after the pair test.",
                                      Expect::none, Tag::none, a));
            plan_.push_back(make_turn("remove " + std::string(1, b), "Resetting after the pair test.",
                                      Expect::none, Tag::none, b));
            return;
        }
        plan_grow();
    }

    void plan_grow() {
        grow_planned_ = true;
        bool any = false;
        for (char o : objects_) {
            if (std::find(on_detector_.begin(), on_detector_.end(), o) != on_detector_.end()) continue;
            plan_.push_back(make_turn("place " + std::string(1, o),
                                      "Building up toward the full set to find a working combination.",
                                      Expect::none, Tag::grow_result, o));
            any = true;
        }
        if (!any) push_idle();
    }

    void plan_order_sweep(const PromptContext& ctx) {
        order_sweep_done_ = true;
        const auto reachable = reachable_states(ctx);
        std::optional<std::string> want;
        if (reachable.count("ORDER_TESTING")) want = "ORDER_TESTING";
        else if (reachable.count("DIMENSION_DISCOVERY")) want = "DIMENSION_DISCOVERY";
        bool first = true;
        const std::vector<char> held(on_detector_.rbegin(), on_detector_.rend());
        for (char o : held) {
            Turn t = make_turn("remove " + std::string(1, o),
                               "Nothing activates; clearing to test placement order instead.",
                               Expect::none, Tag::none, o);
            if (first) t.want_state = want;
            first = false;
            plan_.push_back(std::move(t));
        }
        bool tagged_first = held.empty();
        for (const auto& [a, b] : pairs_) {
            Turn t1 = make_turn("place " + std::string(1, b),
                                std::string("Order test: ") + b + " before " + a + ".", Expect::none,
                                Tag::none, b);
            if (tagged_first) {
                t1.want_state = want;
                tagged_first = false;
            }
            plan_.push_back(std::move(t1));
            plan_.push_back(make_turn("place " + std::string(1, a),
                                      std::string("Completing the reversed pair ") + b + "+" + a + ".",
                                      Expect::none, Tag::order_result, a, b));
            plan_.push_back(make_turn("remove " + std::string(1, b), "Resetting the order test.",
                                      Expect::none, Tag::none, b));
            plan_.push_back(make_turn("remove " + std::string(1, a), "Resetting the order test.",
                                      Expect::none, Tag::none, a));
        }
    }

    // ---- emission -------------------------------------------------------------------

    void apply_to_mirror(const Turn& turn) {
        std::istringstream words(turn.action);
        std::string verb, obj;
        words >> verb >> obj;
        if (verb == "place" && !obj.empty()) {
            if (std::find(on_detector_.begin(), on_detector_.end(), obj[0]) == on_detector_.end()) {
                on_detector_.push_back(obj[0]);
            }
        } else if (verb == "remove" && !obj.empty()) {
            on_detector_.erase(std::remove(on_detector_.begin(), on_detector_.end(), obj[0]),
                               on_detector_.end());
        } else if (verb == "check") {
            checked_ = true;
        }
    }

    std::string format(const Turn& turn) const {
        std::ostringstream out;
        out << "REASONING: " << turn.reasoning << "\n";
        if (turn.want_state && tier_ != Tier::base && *turn.want_state != state_) {
            out << "TRANSITION: " << *turn.want_state << "\n";
        }
        out << "ACTION: " << turn.action;
        if (turn.action == "check" && hypothesis_) {
            out << "\nRULE_TYPE: " << to_string(hypothesis_->rule_type) << "\nBLICKETS: ";
            bool first = true;
            for (char o : hypothesis_->claimed_blickets) {
                if (!first) out << ", ";
                out << o;
                first = false;
            }
        }
        return out.str();
    }

    // immutable setup
    Tier tier_;
    std::vector<char> objects_;
    std::optional<int> trap_target_;
    bool clear_before_check_ = false;
    std::vector<std::pair<char, char>> pairs_;

    // plan + mirrors
    std::deque<Turn> plan_;
    std::optional<Turn> last_;
    std::vector<char> on_detector_;
    std::string state_;  // accepted graph state, tracked from transition feedback

    // evidence
    ObjectSet single_active_;
    std::optional<Answer> hypothesis_;
    int acts_seen_ = 0;

    // phase flags
    bool singles_planned_ = false;
    bool singles_evaluated_ = false;
    bool grow_planned_ = false;
    bool shrinking_ = false;
    std::size_t pair_idx_ = 0;
    std::vector<char> shrink_targets_;
    std::size_t shrink_idx_ = 0;
    bool confirm_planned_ = false;
    bool reflected_ = false;
    bool verified_ = false;
    bool checked_ = false;
    bool violation_ = false;

    // cg_db notification handling
    bool recovery_available_ = false;
    bool recovered_once_ = false;
    bool recovering_ = false;
    bool order_flag_ = false;
    bool order_sweep_done_ = false;
    std::vector<std::string> notified_states_;
};

}  // namespace

std::unique_ptr<Policy> make_scripted_policy(Tier tier, int object_count) {
    return std::make_unique<ScriptedPolicy>(
        tier, object_count, tier == Tier::base ? std::optional<int>(2) : std::nullopt,
        /*clear_before_check=*/tier == Tier::base);
}

std::unique_ptr<Policy> make_trap_policy(int object_count, int target_activations) {
    return std::make_unique<ScriptedPolicy>(Tier::base, object_count, target_activations,
                                            /*clear_before_check=*/false);
}

}  // namespace blicket
