#include "coevo/vote.hpp"

#include <array>

#include "coevo/backend.hpp"
#include "coevo/parse.hpp"
#include "coevo/prompts.hpp"

namespace coevo {

VoteResult majority_vote(const std::vector<std::optional<OptionLabel>>& votes,
                         int m_requested) {
  if (m_requested < 1)
    throw ContractViolation("majority_vote: m_requested must be >= 1");
  if (votes.size() != static_cast<std::size_t>(m_requested))
    throw ContractViolation("majority_vote: got " +
                            std::to_string(votes.size()) + " votes for m=" +
                            std::to_string(m_requested));

  std::array<int, 4> counts = {0, 0, 0, 0};
  VoteResult result;
  result.m_requested = m_requested;
  for (const auto& v : votes) {
    if (!v) continue;
    counts[static_cast<std::size_t>(*v)] += 1;
    result.votes.push_back(*v);
  }
  if (result.votes.empty())
    throw NoReasoningSignal("majority_vote: all " +
                            std::to_string(m_requested) +
                            " samples abstained");

  int best = 0;
  int ties_at_best = 0;
  OptionLabel winner = OptionLabel::A;
  for (OptionLabel label : kAllLabels) {  // A first: ties break low
    const int c = counts[static_cast<std::size_t>(label)];
    if (c > best) {
      best = c;
      winner = label;
      ties_at_best = 1;
    } else if (c == best && c > 0) {
      ties_at_best += 1;
    }
  }
  result.pseudo_label = winner;
  result.confidence = static_cast<double>(best) / m_requested;
  result.tie_broken = ties_at_best > 1;
  return result;
}

VoteResult sample_and_vote(const SceneRef& scene, const McqQuestion& question,
                           PolicyBackend& solver, const LoopConfig& cfg) {
  GenerateRequest req;
  req.system = prompts::kSolverSystem;
  req.user = prompts::solver_user(question);
  req.scene = scene;
  req.temperature = cfg.temperature;
  req.n = cfg.m;
  req.purpose = "solver_vote";

  const auto generations = solver.generate(req);
  const auto labels = extract_option_labels(question);
  std::vector<std::optional<OptionLabel>> votes;
  votes.reserve(generations.size());
  for (const auto& g : generations) {
    auto parsed = parse_solver(g.text);
    if (parsed && !labels.contains(*parsed)) parsed.reset();
    votes.push_back(parsed);
  }
  return majority_vote(votes, cfg.m);
}

}  // namespace coevo
