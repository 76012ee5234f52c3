#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "coevo/backend.hpp"
#include "coevo/types.hpp"

namespace coevo {

// One Questioner generation with everything needed for the trace files.
struct QuestionRecord {
  SceneRef scene;
  std::string raw_text;
  bool valid = false;
  std::optional<McqQuestion> question;
  std::optional<OptionLabel> intuitive_answer;
  std::optional<VoteResult> vote;
  double reward = 0.0;
  double advantage = 0.0;
};

struct QuestionerPhaseResult {
  std::vector<GroupRollout> groups;
  std::vector<QuestionRecord> records;
  int scenes_attempted = 0;
  int scenes_skipped = 0;

  double validity_rate() const;
  double mean_reward() const;
  double mean_confidence() const;  // over voted records
};

// Questioner phase: per scene, draw G generations, reward each (invalid
// outputs get -1 with no Solver call; valid ones are voted against the frozen
// Solver), and z-score within the group. Scenes whose calls error are
// skipped; an all-failed phase throws.
QuestionerPhaseResult run_questioner_phase(PolicyBackend& questioner,
                                           PolicyBackend& frozen_solver,
                                           const std::vector<SceneRef>& scenes,
                                           const LoopConfig& cfg);

std::vector<GroupRollout> questioner_phase(PolicyBackend& questioner,
                                           PolicyBackend& frozen_solver,
                                           const std::vector<SceneRef>& scenes,
                                           const LoopConfig& cfg);

struct DatasetResult {
  std::vector<TrainingSample> samples;
  int scenes_attempted = 0;
  int dropped_invalid = 0;        // redraw budget exhausted
  int dropped_out_of_window = 0;  // confidence outside [low, high]
  int dropped_error = 0;

  double retention_rate() const;
};

// Difficulty-guided dataset construction: one question per scene (invalid
// generations are re-drawn up to cfg.redraw_budget extra times), voted with m
// samples, kept iff filter_low <= s <= filter_high.
DatasetResult run_build_dataset(PolicyBackend& questioner,
                                PolicyBackend& solver,
                                const std::vector<SceneRef>& scenes,
                                const LoopConfig& cfg, int iteration);

std::vector<TrainingSample> build_dataset(PolicyBackend& questioner,
                                          PolicyBackend& solver,
                                          const std::vector<SceneRef>& scenes,
                                          const LoopConfig& cfg);

// Solver phase: G completions per training sample, binary accuracy rewards
// against the pseudo-label, z-scored within the group.
std::vector<GroupRollout> solver_phase(PolicyBackend& solver,
                                       const std::vector<TrainingSample>& dataset,
                                       const LoopConfig& cfg);

// Writes line-delimited {prompt, completion, reward, advantage, old_logprob?}
// records for external trainers. Returns the record count.
std::size_t export_batches(std::span<const GroupRollout> groups,
                           const std::filesystem::path& path);

struct IterationMetrics {
  int iteration = 0;
  int scenes = 0;
  int generations = 0;
  double validity_rate = 0.0;
  double mean_questioner_reward = 0.0;
  double mean_confidence = 0.0;
  double retention_rate = 0.0;
  int dataset_size = 0;
  double mean_solver_reward = 0.0;
  std::optional<double> mean_judged_difficulty;
  std::string kl_estimate = "exact";  // "omitted" for logprob-less backends

  nlohmann::json to_json() const;
};

// Run directory:
//   manifest.json, logs/requests.jsonl,
//   iter_<k>/{questions.jsonl, dataset.jsonl, batches.jsonl, metrics.json}
// Everything under iter_<k> is written atomically (temp file + rename).
class RunDir {
 public:
  explicit RunDir(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path manifest_path() const { return root_ / "manifest.json"; }
  std::filesystem::path iter_dir(int iteration) const;
  std::filesystem::path requests_log_path() const {
    return root_ / "logs" / "requests.jsonl";
  }

  bool initialized() const;
  void initialize(const nlohmann::json& manifest);
  nlohmann::json manifest() const;
  void update_manifest(const nlohmann::json& manifest);
  int iterations_completed() const;

  static void write_atomic(const std::filesystem::path& path,
                           const std::string& content);

 private:
  std::filesystem::path root_;
};

struct EngineBackends {
  PolicyBackend* questioner = nullptr;
  PolicyBackend* solver = nullptr;
  PolicyBackend* judge = nullptr;        // optional
  PolicyBackend* base_solver = nullptr;  // for FeedbackSolverMode::base
};

// One full co-evolution iteration: questioner phase -> policy update or
// export -> dataset construction with the updated questioner -> solver phase
// -> policy update or export; persists all artifacts and bumps the manifest's
// iteration counter.
IterationMetrics run_iteration(RunDir& run, const EngineBackends& backends,
                               const std::vector<SceneRef>& scene_pool,
                               const LoopConfig& cfg);

struct EvalMetrics {
  double validity_rate = 0.0;
  double mean_reward = 0.0;
  double mean_confidence = 0.0;
  std::optional<double> mean_judged_difficulty;
  int generations = 0;
};

// Side-effect-free measurement of the questioner against a fixed scene set:
// runs the questioner phase on backend snapshots and judges the valid
// questions. The live backends are not advanced.
EvalMetrics evaluate_questioner(const PolicyBackend& questioner,
                                const PolicyBackend& solver,
                                PolicyBackend* judge,
                                const std::vector<SceneRef>& scenes,
                                const LoopConfig& cfg);

// Deterministic cyclic slice of the scene pool for one phase.
std::vector<SceneRef> slice_scene_pool(const std::vector<SceneRef>& pool,
                                       int block, int count);

}  // namespace coevo
