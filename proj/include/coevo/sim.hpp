#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coevo/backend.hpp"
#include "coevo/grpo.hpp"
#include "coevo/types.hpp"

namespace coevo::sim {

// The question-template catalogue. Every template renders for every scene
// kind; tiers drive both the solver accuracy curve and the judge score.
// "pivot" is the trap template: its rendered intuitive answer differs from
// the true one.
struct TemplateInfo {
  const char* id;
  int tier;  // 0 simple, 1 medium, 2 hard
  bool trap;
};

inline constexpr std::array<TemplateInfo, 6> kTemplates = {{
    {"count", 0, false},
    {"read", 0, false},
    {"measure", 1, false},
    {"combine", 1, false},
    {"chain", 2, false},
    {"pivot", 2, true},
}};

const TemplateInfo* template_info(std::string_view id);

// Judge band midpoints per tier: Simple 0.0-0.3, Medium 0.4-0.7, Hard 0.8-1.0.
inline constexpr std::array<double, 3> kTierMidpoints = {0.15, 0.55, 0.90};

// Deterministic scene construction. Kind mix is geometry-heavy (roughly
// 2/3 geometry, 1/6 charts, 1/6 spatial layouts).
SceneRef make_scene(std::uint64_t run_seed, std::string_view tag, int index);
std::vector<SceneRef> make_scenes(std::uint64_t run_seed, std::string_view tag,
                                  int count);

struct RenderedQuestion {
  McqQuestion question;
  OptionLabel correct = OptionLabel::A;
  OptionLabel intuition = OptionLabel::A;  // equals correct unless trap
  std::string template_id;
  int tier = 0;
};

// Renders one template against a scene. Fully determined by (scene,
// template); option placement is seeded from the scene content.
RenderedQuestion render_template(std::string_view template_id,
                                 const SceneRef& scene);

// Scene description used in <description> blocks.
std::string describe_scene(const SimSceneSpec& spec);

// Correct label per template for this scene.
std::map<std::string, OptionLabel> answer_table(const SceneRef& scene);

// Recovers which template produced a question by exact re-render comparison.
// Returns nullopt for questions this world did not generate.
std::optional<RenderedQuestion> match_question(const SceneRef& scene,
                                               const McqQuestion& question);

struct SimQuestionerConfig {
  // Probability mass on grammar-conforming actions at initialization.
  double validity_rate = 0.649;
  // Valid mass split across tiers (templates within a tier split evenly).
  std::array<double, 3> tier_weights = {0.25, 0.55, 0.20};
  // Per-role multiplier on LoopConfig.learning_rate.
  double lr_scale = 1.0;
};

// Question generator over (template x malformed-mode) actions. Training down-
// weights the malformed actions, which is what raises the measured validity
// rate over iterations.
class SimQuestionerBackend final : public PolicyBackend {
 public:
  explicit SimQuestionerBackend(std::uint64_t seed,
                                SimQuestionerConfig cfg = {});

  std::string kind() const override { return "simulated"; }
  bool returns_logprobs() const override { return true; }
  bool trainable() const override { return true; }
  std::vector<Generation> generate(const GenerateRequest& request) override;
  void apply_grpo_update(std::span<const GroupRollout> groups,
                         const LoopConfig& cfg) override;
  std::unique_ptr<PolicyBackend> snapshot() const override;

  const SoftmaxPolicy& policy() const { return policy_; }
  double valid_action_mass() const;

 private:
  SoftmaxPolicy policy_;
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;
  double lr_scale_ = 1.0;
};

struct SimSolverConfig {
  // Probability of answering the true label, per template tier.
  std::array<double, 3> accuracy = {0.92, 0.62, 0.45};
  // How the wrong mass spreads over the three wrong labels.
  std::array<double, 3> confusion = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  // Per-role multiplier on LoopConfig.learning_rate. The solver sees many
  // more groups per iteration than the questioner, so it steps softer.
  double lr_scale = 0.05;
};

// Answer generator with one trainable outcome policy per tier. Questions it
// cannot match to a template get uniform unparsed-intent answers.
class SimSolverBackend final : public PolicyBackend {
 public:
  explicit SimSolverBackend(std::uint64_t seed, SimSolverConfig cfg = {});

  std::string kind() const override { return "simulated"; }
  bool returns_logprobs() const override { return true; }
  bool trainable() const override { return true; }
  std::vector<Generation> generate(const GenerateRequest& request) override;
  void apply_grpo_update(std::span<const GroupRollout> groups,
                         const LoopConfig& cfg) override;
  std::unique_ptr<PolicyBackend> snapshot() const override;

  double accuracy(int tier) const;  // current P(correct outcome)

 private:
  std::array<SoftmaxPolicy, 3> tier_policies_;
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;
  double lr_scale_ = 1.0;
};

// Difficulty judge: maps the matched template's tier to its band midpoint.
// Unmatched questions get a non-numeric reply, which callers record as a
// missing score.
class SimJudgeBackend final : public PolicyBackend {
 public:
  explicit SimJudgeBackend(std::uint64_t seed) : seed_(seed) {}

  std::string kind() const override { return "simulated"; }
  bool returns_logprobs() const override { return false; }
  std::vector<Generation> generate(const GenerateRequest& request) override;
  std::unique_ptr<PolicyBackend> snapshot() const override;

 private:
  std::uint64_t seed_;
};

}  // namespace coevo::sim
