#include <doctest.h>

#include <array>
#include <map>

#include "coevo/rng.hpp"
#include "coevo/vote.hpp"
#include "test_support.hpp"

using namespace coevo;
using testsupport::ScriptedBackend;

namespace {

using Vote = std::optional<OptionLabel>;

// Independent oracle: literal count over the multiset, smallest label wins
// ties, all-absent reports no signal.
struct OracleResult {
  bool no_signal = false;
  OptionLabel pseudo = OptionLabel::A;
  double confidence = 0.0;
  bool tie = false;
};

OracleResult oracle(const std::vector<Vote>& votes, int m) {
  std::map<OptionLabel, int> counts;
  for (const auto& v : votes)
    if (v) counts[*v] += 1;
  OracleResult r;
  if (counts.empty()) {
    r.no_signal = true;
    return r;
  }
  int best = 0;
  for (const auto& [label, c] : counts) best = std::max(best, c);
  int at_best = 0;
  for (const auto& [label, c] : counts)
    if (c == best) ++at_best;
  for (OptionLabel label : kAllLabels) {
    if (counts.count(label) && counts[label] == best) {
      r.pseudo = label;
      break;
    }
  }
  r.confidence = static_cast<double>(best) / m;
  r.tie = at_best > 1;
  return r;
}

const std::array<Vote, 5> kSymbols = {Vote{OptionLabel::A}, Vote{OptionLabel::B},
                                      Vote{OptionLabel::C}, Vote{OptionLabel::D},
                                      Vote{}};

}  // namespace

TEST_CASE("majority_vote spec examples") {
  using L = OptionLabel;
  std::vector<Vote> v1 = {L::A, L::A, L::A, L::A, L::A,
                          L::A, L::B, L::B, L::C, Vote{}};
  auto r1 = majority_vote(v1, 10);
  CHECK(r1.pseudo_label == L::A);
  CHECK(r1.confidence == doctest::Approx(0.6).epsilon(1e-12));
  CHECK_FALSE(r1.tie_broken);
  CHECK(r1.votes.size() == 9);

  std::vector<Vote> v2(10, Vote{L::A});
  auto r2 = majority_vote(v2, 10);
  CHECK(r2.pseudo_label == L::A);
  CHECK(r2.confidence == 1.0);

  std::vector<Vote> v3 = {L::A, L::A, L::B, L::B, L::C,
                          Vote{}, Vote{}, Vote{}, Vote{}, Vote{}};
  auto r3 = majority_vote(v3, 10);
  CHECK(r3.pseudo_label == L::A);
  CHECK(r3.confidence == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(r3.tie_broken);

  CHECK_THROWS_AS(majority_vote(std::vector<Vote>(10), 10), NoReasoningSignal);
  CHECK_THROWS_AS(majority_vote(v1, 9), ContractViolation);
}

TEST_CASE("exhaustive: all vote sequences up to length 6 match the oracle") {
  for (int len = 1; len <= 6; ++len) {
    std::vector<std::size_t> digits(static_cast<std::size_t>(len), 0);
    bool done = false;
    while (!done) {
      std::vector<Vote> votes;
      for (auto d : digits) votes.push_back(kSymbols[d]);
      const auto expected = oracle(votes, len);
      if (expected.no_signal) {
        CHECK_THROWS_AS(majority_vote(votes, len), NoReasoningSignal);
      } else {
        const auto got = majority_vote(votes, len);
        CHECK(got.pseudo_label == expected.pseudo);
        CHECK(got.confidence == doctest::Approx(expected.confidence).epsilon(1e-12));
        CHECK(got.tie_broken == expected.tie);
        // confidence * m is an exact integer count
        const double scaled = got.confidence * len;
        CHECK(scaled == doctest::Approx(std::round(scaled)).epsilon(1e-12));
      }
      // next sequence
      done = true;
      for (std::size_t i = 0; i < digits.size(); ++i) {
        if (++digits[i] < kSymbols.size()) {
          done = false;
          break;
        }
        digits[i] = 0;
      }
    }
  }
}

TEST_CASE("confidence is invariant under vote permutations") {
  Rng rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    const int m = rng.uniform_int(2, 12);
    std::vector<Vote> votes;
    for (int i = 0; i < m; ++i) {
      const int s = rng.uniform_int(0, 4);
      votes.push_back(s == 4 ? Vote{} : Vote{static_cast<OptionLabel>(s)});
    }
    bool any = false;
    for (const auto& v : votes) any |= v.has_value();
    if (!any) continue;
    const auto base = majority_vote(votes, m);
    for (int shuffle = 0; shuffle < 5; ++shuffle) {
      for (std::size_t i = votes.size(); i > 1; --i)
        std::swap(votes[i - 1],
                  votes[static_cast<std::size_t>(rng.uniform_int(0, int(i) - 1))]);
      const auto permuted = majority_vote(votes, m);
      CHECK(permuted.pseudo_label == base.pseudo_label);
      CHECK(permuted.confidence == base.confidence);
      CHECK(permuted.tie_broken == base.tie_broken);
    }
  }
}

TEST_CASE("adding a vote for the winner never demotes it") {
  Rng rng(43);
  for (int trial = 0; trial < 300; ++trial) {
    const int m = rng.uniform_int(2, 10);
    std::vector<Vote> votes;
    for (int i = 0; i < m; ++i) {
      const int s = rng.uniform_int(0, 4);
      votes.push_back(s == 4 ? Vote{} : Vote{static_cast<OptionLabel>(s)});
    }
    bool any = false;
    for (const auto& v : votes) any |= v.has_value();
    if (!any) continue;
    const auto base = majority_vote(votes, m);
    votes.push_back(Vote{base.pseudo_label});
    const auto bigger = majority_vote(votes, m + 1);
    CHECK(bigger.pseudo_label == base.pseudo_label);
    CHECK_FALSE(bigger.tie_broken);
  }
}

TEST_CASE("sample_and_vote with a deterministic solver") {
  auto solver = ScriptedBackend::fixed_answer('A');
  LoopConfig cfg;
  const auto scene = testsupport::sim_scene();
  const auto rendered = sim::render_template("read", scene);
  const auto vote = sample_and_vote(scene, rendered.question, solver, cfg);
  CHECK(vote.pseudo_label == OptionLabel::A);
  CHECK(vote.confidence == 1.0);
  CHECK(vote.m_requested == cfg.m);
}

TEST_CASE("sample_and_vote matches a binomial oracle over 1000 trials") {
  // Solver answers A with p=0.6, B otherwise.
  Rng coin(2024);
  auto solver = ScriptedBackend([&coin](const GenerateRequest& req) {
    std::vector<std::string> out;
    for (int i = 0; i < req.n; ++i)
      out.push_back(coin.uniform() < 0.6 ? "\\boxed{A}" : "\\boxed{B}");
    return out;
  });

  LoopConfig cfg;  // m = 10
  const auto scene = testsupport::sim_scene();
  const auto q = sim::render_template("read", scene).question;

  const int trials = 1000;
  double mean_a = 0.0, var_a = 0.0;
  std::vector<int> counts;
  for (int t = 0; t < trials; ++t) {
    const auto vote = sample_and_vote(scene, q, solver, cfg);
    int a = 0;
    for (auto v : vote.votes)
      if (v == OptionLabel::A) ++a;
    counts.push_back(a);
    mean_a += a;
  }
  mean_a /= trials;
  for (int a : counts) var_a += (a - mean_a) * (a - mean_a);
  var_a /= trials;

  // Binomial(10, 0.6): mean 6, variance 2.4.
  CHECK(mean_a == doctest::Approx(6.0).epsilon(0.03));
  CHECK(var_a == doctest::Approx(2.4).epsilon(0.15));
}

TEST_CASE("sample_and_vote propagates failures and all-abstain batches") {
  LoopConfig cfg;
  const auto scene = testsupport::sim_scene();
  const auto q = sim::render_template("read", scene).question;

  auto broken = ScriptedBackend([](const GenerateRequest&) -> std::vector<std::string> {
    throw TransportError("connection refused");
  });
  CHECK_THROWS_AS(sample_and_vote(scene, q, broken, cfg), TransportError);

  auto mute = ScriptedBackend([](const GenerateRequest& req) {
    return std::vector<std::string>(static_cast<std::size_t>(req.n),
                                    "no answer here");
  });
  CHECK_THROWS_AS(sample_and_vote(scene, q, mute, cfg), NoReasoningSignal);
}
