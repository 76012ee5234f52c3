#pragma once

#include <optional>

#include "coevo/types.hpp"

namespace coevo {

// Dual-track reasoning reward. When the pseudo-label agrees with the
// intuitive answer the question is likely easy, so the reward is the
// uncertainty term min(c, 1-c), peaking at c = 0.5. When reasoning overturns
// intuition the reward is 0.5 * c, growing with confidence. Range [0, 0.5].
//
// Throws ContractViolation when confidence leaves [0, 1].
double dual_track_reward(OptionLabel pseudo_label, OptionLabel intuitive,
                         double confidence);

// Final Questioner reward with the format gate: -1 for any output that failed
// the grammar, otherwise the dual-track reward of its vote. A valid output
// with no vote is a caller bug.
double questioner_reward(const QuestionerOutput& output,
                         const std::optional<VoteResult>& vote);

// Binary Solver accuracy reward: 1 iff the parsed answer matches the
// pseudo-label; abstentions score 0.
double solver_reward(std::optional<OptionLabel> answer,
                     OptionLabel pseudo_label);

}  // namespace coevo
