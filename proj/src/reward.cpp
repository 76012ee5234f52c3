#include "coevo/reward.hpp"

#include <algorithm>

namespace coevo {

double dual_track_reward(OptionLabel pseudo_label, OptionLabel intuitive,
                         double confidence) {
  if (!(confidence >= 0.0 && confidence <= 1.0))
    throw ContractViolation("dual_track_reward: confidence " +
                            std::to_string(confidence) + " outside [0,1]");
  if (pseudo_label == intuitive)
    return std::min(confidence, 1.0 - confidence);
  return 0.5 * confidence;
}

double questioner_reward(const QuestionerOutput& output,
                         const std::optional<VoteResult>& vote) {
  if (!output.valid) return -1.0;
  if (!vote)
    throw ContractViolation("questioner_reward: valid output without a vote");
  return dual_track_reward(vote->pseudo_label, *output.intuitive_answer,
                           vote->confidence);
}

double solver_reward(std::optional<OptionLabel> answer,
                     OptionLabel pseudo_label) {
  return (answer && *answer == pseudo_label) ? 1.0 : 0.0;
}

}  // namespace coevo
