#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coevo/rng.hpp"
#include "coevo/types.hpp"

namespace coevo {

// Categorical policy over a finite action alphabet, the desk-scale stand-in
// for the trained model. Probabilities are the normalized exponentials of the
// logits; -inf logits denote actions with exactly zero mass.
struct SoftmaxPolicy {
  std::vector<std::string> action_alphabet;
  std::vector<double> logits;

  std::size_t size() const { return logits.size(); }
  std::vector<double> probabilities() const;
  double log_prob(std::size_t index) const;
  std::optional<std::size_t> index_of(std::string_view action) const;

  // Samples an index from softmax(logits / temperature). Temperatures at or
  // below 1e-9 collapse to the argmax (lowest index wins ties).
  std::size_t sample(Rng& rng, double temperature) const;

  // Builds a policy from explicit probabilities (logits = log p).
  static SoftmaxPolicy from_probabilities(std::vector<std::string> alphabet,
                                          const std::vector<double>& probs);
};

// Z-score advantages within one group: (r - mean) / (population_std + eps).
// A singleton group has no relative signal and throws.
std::vector<double> group_advantages(std::span<const double> rewards,
                                     double norm_epsilon);

// Clipped-surrogate loss for one group, using the log-prob pairs stored in
// the completions:
//   -(1/G) * sum_j min(ratio_j * A_j, clip(ratio_j, 1-eps, 1+eps) * A_j)
//     + kl_beta * kl_value.
// Non-finite ratios or advantages throw with the offending index.
double grpo_loss(const GroupRollout& group, double clip_epsilon,
                 double kl_beta, double kl_value);

// Exact categorical KL(current || old). Alphabets must match.
double kl_penalty(const SoftmaxPolicy& current, const SoftmaxPolicy& old_policy);

// Mean grpo_loss over groups as a differentiable function of the current
// policy's logits: ratios are exp(log_prob(current, action) - stored old
// log-prob) and the KL term is taken against old_policy. Completions resolve
// to actions via action_id (falling back to text).
double policy_objective(const SoftmaxPolicy& current,
                        const SoftmaxPolicy& old_policy,
                        std::span<const GroupRollout> groups,
                        double clip_epsilon, double kl_beta);

// Analytic gradient of policy_objective with respect to the current logits.
std::vector<double> policy_gradient(const SoftmaxPolicy& current,
                                    const SoftmaxPolicy& old_policy,
                                    std::span<const GroupRollout> groups,
                                    double clip_epsilon, double kl_beta);

// One gradient-descent step of size cfg.learning_rate on the mean grpo_loss.
// The rollouts must have been sampled from `policy`, which therefore also
// serves as the KL reference.
SoftmaxPolicy policy_step(const SoftmaxPolicy& policy,
                          std::span<const GroupRollout> groups,
                          const LoopConfig& cfg);

}  // namespace coevo
