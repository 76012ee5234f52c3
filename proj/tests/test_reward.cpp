#include <doctest.h>

#include <cmath>

#include "coevo/parse.hpp"
#include "coevo/reward.hpp"
#include "coevo/rng.hpp"

using namespace coevo;

TEST_CASE("dual-track reward matches the case equation on a c grid") {
  for (int i = 0; i <= 10; ++i) {
    const double c = i / 10.0;
    const double consistency = dual_track_reward(OptionLabel::A, OptionLabel::A, c);
    const double divergence = dual_track_reward(OptionLabel::B, OptionLabel::A, c);
    CHECK(std::abs(consistency - std::min(c, 1.0 - c)) < 1e-12);
    CHECK(std::abs(divergence - 0.5 * c) < 1e-12);
  }
}

TEST_CASE("dual-track reward spec examples") {
  CHECK(dual_track_reward(OptionLabel::A, OptionLabel::A, 0.5) == 0.5);
  CHECK(dual_track_reward(OptionLabel::A, OptionLabel::A, 1.0) == 0.0);
  CHECK(dual_track_reward(OptionLabel::B, OptionLabel::A, 0.8) ==
        doctest::Approx(0.4).epsilon(1e-12));
  CHECK(dual_track_reward(OptionLabel::B, OptionLabel::A, 0.1) ==
        doctest::Approx(0.05).epsilon(1e-12));
  CHECK_THROWS_AS(dual_track_reward(OptionLabel::A, OptionLabel::A, 1.5),
                  ContractViolation);
  CHECK_THROWS_AS(dual_track_reward(OptionLabel::A, OptionLabel::A, -0.1),
                  ContractViolation);
}

TEST_CASE("anti-hacking properties over random confidences") {
  Rng rng(505);
  double best_consistency = -1.0;
  for (int i = 0; i < 10000; ++i) {
    const double c = rng.uniform();
    const double consistency = dual_track_reward(OptionLabel::C, OptionLabel::C, c);
    const double divergence = dual_track_reward(OptionLabel::C, OptionLabel::D, c);

    // consistency branch peaks at 0.5 and collapses toward both extremes
    CHECK(consistency <= 0.5);
    CHECK(consistency <= dual_track_reward(OptionLabel::C, OptionLabel::C, 0.5));
    best_consistency = std::max(best_consistency, consistency);

    // divergence branch is linear in c
    CHECK(divergence == doctest::Approx(0.5 * c).epsilon(1e-12));

    // ranges
    CHECK(consistency >= 0.0);
    CHECK(divergence >= 0.0);
  }
  CHECK(best_consistency > 0.49);  // the peak is actually approached

  // strict monotonicity on each side of the consistency peak, and of the
  // divergence branch everywhere
  Rng rng2(506);
  for (int i = 0; i < 10000; ++i) {
    double a = rng2.uniform(), b = rng2.uniform();
    if (a > b) std::swap(a, b);
    if (a == b) continue;
    CHECK(dual_track_reward(OptionLabel::A, OptionLabel::B, a) <
          dual_track_reward(OptionLabel::A, OptionLabel::B, b));
    if (b <= 0.5)
      CHECK(dual_track_reward(OptionLabel::A, OptionLabel::A, a) <
            dual_track_reward(OptionLabel::A, OptionLabel::A, b));
    if (a >= 0.5)
      CHECK(dual_track_reward(OptionLabel::A, OptionLabel::A, a) >
            dual_track_reward(OptionLabel::A, OptionLabel::A, b));
  }
}

TEST_CASE("questioner reward gates on format") {
  QuestionerOutput invalid;
  invalid.valid = false;
  CHECK(questioner_reward(invalid, std::nullopt) == -1.0);

  const auto valid = parse_questioner(
      "<question>Pick.\nA. 1 B. 2 C. 3 D. 4</question><answer>A</answer>");
  REQUIRE(valid.valid);

  VoteResult vote;
  vote.pseudo_label = OptionLabel::A;
  vote.confidence = 0.5;
  vote.m_requested = 10;
  CHECK(questioner_reward(valid, vote) == 0.5);

  vote.confidence = 0.98;
  CHECK(questioner_reward(valid, vote) == doctest::Approx(0.02).epsilon(1e-9));

  CHECK_THROWS_AS(questioner_reward(valid, std::nullopt), ContractViolation);
}

TEST_CASE("format penalty strictly dominates every valid reward") {
  Rng rng(507);
  const auto valid = parse_questioner(
      "<question>Pick.\nA. 1 B. 2 C. 3 D. 4</question><answer>B</answer>");
  QuestionerOutput invalid;
  for (int i = 0; i < 10000; ++i) {
    VoteResult vote;
    vote.pseudo_label = static_cast<OptionLabel>(rng.uniform_int(0, 3));
    vote.confidence = rng.uniform();
    vote.m_requested = 10;
    CHECK(questioner_reward(invalid, std::nullopt) <
          questioner_reward(valid, vote));
  }
}

TEST_CASE("dual-track reward is continuous in c on each branch") {
  Rng rng(508);
  for (int i = 0; i < 2000; ++i) {
    const double c = 0.001 + 0.998 * rng.uniform();
    const double h = 1e-9;
    CHECK(std::abs(dual_track_reward(OptionLabel::A, OptionLabel::A, c + h) -
                   dual_track_reward(OptionLabel::A, OptionLabel::A, c - h)) <
          1e-8);
    CHECK(std::abs(dual_track_reward(OptionLabel::A, OptionLabel::B, c + h) -
                   dual_track_reward(OptionLabel::A, OptionLabel::B, c - h)) <
          1e-8);
  }
}

TEST_CASE("solver reward is the binary match") {
  CHECK(solver_reward(OptionLabel::C, OptionLabel::C) == 1.0);
  CHECK(solver_reward(OptionLabel::B, OptionLabel::C) == 0.0);
  CHECK(solver_reward(std::nullopt, OptionLabel::C) == 0.0);
}
