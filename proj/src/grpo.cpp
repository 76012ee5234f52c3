#include "coevo/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace coevo {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double logsumexp(std::span<const double> v) {
  double mx = -kInf;
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

std::size_t resolve_action(const SoftmaxPolicy& policy, const Completion& c,
                           std::size_t group_idx, std::size_t member_idx) {
  const std::string& key = c.action_id.empty() ? c.text : c.action_id;
  const auto idx = policy.index_of(key);
  if (!idx)
    throw ContractViolation("policy update: completion " +
                            std::to_string(member_idx) + " of group " +
                            std::to_string(group_idx) + " names action '" +
                            key + "' outside the policy alphabet");
  return *idx;
}

}  // namespace

std::vector<double> SoftmaxPolicy::probabilities() const {
  const double lse = logsumexp(logits);
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    p[i] = std::exp(logits[i] - lse);
  return p;
}

double SoftmaxPolicy::log_prob(std::size_t index) const {
  return logits[index] - logsumexp(logits);
}

std::optional<std::size_t> SoftmaxPolicy::index_of(
    std::string_view action) const {
  for (std::size_t i = 0; i < action_alphabet.size(); ++i)
    if (action_alphabet[i] == action) return i;
  return std::nullopt;
}

std::size_t SoftmaxPolicy::sample(Rng& rng, double temperature) const {
  if (logits.empty()) throw ContractViolation("sample: empty policy");
  if (temperature <= 1e-9) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
      if (logits[i] > logits[best]) best = i;
    return best;
  }
  std::vector<double> scaled(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    scaled[i] = logits[i] / temperature;
  const double lse = logsumexp(scaled);
  std::vector<double> p(scaled.size());
  for (std::size_t i = 0; i < scaled.size(); ++i)
    p[i] = std::exp(scaled[i] - lse);
  return rng.categorical(p);
}

SoftmaxPolicy SoftmaxPolicy::from_probabilities(
    std::vector<std::string> alphabet, const std::vector<double>& probs) {
  if (alphabet.size() != probs.size())
    throw ContractViolation("from_probabilities: size mismatch");
  SoftmaxPolicy policy;
  policy.action_alphabet = std::move(alphabet);
  policy.logits.reserve(probs.size());
  for (double p : probs) {
    if (p < 0.0) throw ContractViolation("from_probabilities: negative mass");
    policy.logits.push_back(p > 0.0 ? std::log(p) : -kInf);
  }
  return policy;
}

std::vector<double> group_advantages(std::span<const double> rewards,
                                     double norm_epsilon) {
  if (rewards.size() < 2)
    throw ContractViolation(
        "group_advantages: a group needs at least 2 members");
  if (norm_epsilon <= 0.0)
    throw ContractViolation("group_advantages: norm_epsilon must be > 0");

  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());

  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(rewards.size());  // population variance
  const double denom = std::sqrt(var) + norm_epsilon;

  std::vector<double> advantages(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i)
    advantages[i] = (rewards[i] - mean) / denom;
  return advantages;
}

double grpo_loss(const GroupRollout& group, double clip_epsilon,
                 double kl_beta, double kl_value) {
  const std::size_t g = group.completions.size();
  if (g == 0) throw ContractViolation("grpo_loss: empty group");
  if (group.advantages.size() != g)
    throw ContractViolation("grpo_loss: advantages/completions size mismatch");

  double acc = 0.0;
  for (std::size_t j = 0; j < g; ++j) {
    const auto& c = group.completions[j];
    const double ratio = std::exp(c.log_prob_current - c.log_prob_old);
    const double adv = group.advantages[j];
    if (!std::isfinite(ratio))
      throw Error("grpo_loss: non-finite ratio at index " + std::to_string(j));
    if (!std::isfinite(adv))
      throw Error("grpo_loss: non-finite advantage at index " +
                  std::to_string(j));
    const double clipped =
        std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    acc += std::min(ratio * adv, clipped * adv);
  }
  return -acc / static_cast<double>(g) + kl_beta * kl_value;
}

double kl_penalty(const SoftmaxPolicy& current,
                  const SoftmaxPolicy& old_policy) {
  if (current.action_alphabet != old_policy.action_alphabet)
    throw ContractViolation("kl_penalty: action alphabets differ");
  const auto p = current.probabilities();
  const auto q = old_policy.probabilities();
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;  // 0 * log(0/q) = 0
    if (q[i] == 0.0) return kInf;
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(kl, 0.0);  // guard tiny negative rounding
}

double policy_objective(const SoftmaxPolicy& current,
                        const SoftmaxPolicy& old_policy,
                        std::span<const GroupRollout> groups,
                        double clip_epsilon, double kl_beta) {
  if (groups.empty()) throw ContractViolation("policy_objective: no groups");
  const double kl = kl_penalty(current, old_policy);
  double total = 0.0;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& group = groups[gi];
    GroupRollout resolved = group;
    for (std::size_t j = 0; j < group.completions.size(); ++j) {
      const std::size_t a = resolve_action(current, group.completions[j], gi, j);
      resolved.completions[j].log_prob_current = current.log_prob(a);
    }
    total += grpo_loss(resolved, clip_epsilon, kl_beta, kl);
  }
  return total / static_cast<double>(groups.size());
}

std::vector<double> policy_gradient(const SoftmaxPolicy& current,
                                    const SoftmaxPolicy& old_policy,
                                    std::span<const GroupRollout> groups,
                                    double clip_epsilon, double kl_beta) {
  if (groups.empty()) throw ContractViolation("policy_gradient: no groups");
  const std::size_t n = current.size();
  const auto p = current.probabilities();
  std::vector<double> grad(n, 0.0);

  // Surrogate part. d ratio / d logit_k = ratio * (1[k==a] - p_k); the
  // gradient vanishes where the clipped branch is strictly active, because
  // there the ratio sits outside the clip band where clip' = 0.
  const double group_weight = 1.0 / static_cast<double>(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& group = groups[gi];
    const std::size_t g = group.completions.size();
    if (group.advantages.size() != g)
      throw ContractViolation("policy_gradient: group " + std::to_string(gi) +
                              " advantages/completions size mismatch");
    for (std::size_t j = 0; j < g; ++j) {
      const auto& c = group.completions[j];
      const std::size_t a = resolve_action(current, c, gi, j);
      const double ratio = std::exp(current.log_prob(a) - c.log_prob_old);
      const double adv = group.advantages[j];
      if (!std::isfinite(ratio))
        throw Error("policy_gradient: non-finite ratio at index " +
                    std::to_string(j));
      const double clipped =
          std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
      if (ratio * adv > clipped * adv) continue;  // clipped branch active
      const double scale =
          -group_weight / static_cast<double>(g) * adv * ratio;
      for (std::size_t k = 0; k < n; ++k) {
        const double indicator = (k == a) ? 1.0 : 0.0;
        grad[k] += scale * (indicator - p[k]);
      }
    }
  }

  // KL part: d KL(p||q) / d logit_k = p_k * (log(p_k/q_k) - KL).
  if (kl_beta != 0.0) {
    const auto q = old_policy.probabilities();
    const double kl = kl_penalty(current, old_policy);
    for (std::size_t k = 0; k < n; ++k) {
      if (p[k] == 0.0) continue;
      grad[k] += kl_beta * p[k] * (std::log(p[k] / q[k]) - kl);
    }
  }
  return grad;
}

SoftmaxPolicy policy_step(const SoftmaxPolicy& policy,
                          std::span<const GroupRollout> groups,
                          const LoopConfig& cfg) {
  const auto grad =
      policy_gradient(policy, policy, groups, cfg.clip_epsilon, cfg.kl_beta);
  SoftmaxPolicy next = policy;
  for (std::size_t k = 0; k < next.logits.size(); ++k)
    next.logits[k] -= cfg.learning_rate * grad[k];
  return next;
}

}  // namespace coevo
