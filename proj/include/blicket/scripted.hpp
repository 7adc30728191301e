#pragma once
// Deterministic reference policies for the three tiers. They speak the same
// text protocol as a model-backed policy and exercise the full harness:
// singles, pair search, grow/shrink minimization, confirmation, reflection
// and verification turns with TRANSITION directives, notification-driven
// recovery (cg_db), and check submission.

#include <memory>

#include "blicket/agent.hpp"

namespace blicket {

std::unique_ptr<Policy> make_scripted_policy(Tier tier, int object_count);

// Base-tier variant that keeps re-confirming its first hypothesis until its
// observed activation count reaches target_activations, then checks on the
// next turn. With target == the hidden-moderator switch point this walks
// straight into the exactly-N trap.
std::unique_ptr<Policy> make_trap_policy(int object_count, int target_activations);

}  // namespace blicket
