#pragma once

#include <optional>
#include <vector>

#include "coevo/types.hpp"

namespace coevo {

class PolicyBackend;

// Majority vote over parsed Solver answers. `votes` must have exactly
// m_requested entries; nullopt entries are abstentions from unparseable
// outputs and dilute every option's confidence. Ties break to the
// lexicographically smallest label, flagged via tie_broken.
//
// Throws NoReasoningSignal when every entry abstained, and ContractViolation
// on a length mismatch.
VoteResult majority_vote(const std::vector<std::optional<OptionLabel>>& votes,
                         int m_requested);

// Draws cfg.m Solver completions for the question at cfg.temperature, parses
// each, and majority-votes the results. Backend failures propagate; partial
// batches are never silently truncated.
VoteResult sample_and_vote(const SceneRef& scene, const McqQuestion& question,
                           PolicyBackend& solver, const LoopConfig& cfg);

}  // namespace coevo
