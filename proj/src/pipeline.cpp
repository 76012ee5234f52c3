#include "coevo/pipeline.hpp"

#include <fstream>
#include <iostream>

#include "coevo/audit.hpp"
#include "coevo/grpo.hpp"
#include "coevo/parse.hpp"
#include "coevo/prompts.hpp"
#include "coevo/reward.hpp"
#include "coevo/serialize.hpp"
#include "coevo/vote.hpp"

namespace coevo {

using nlohmann::json;

namespace {

json question_record_to_json(const QuestionRecord& rec) {
  json j{{"scene", to_json(rec.scene)},
         {"raw_text", rec.raw_text},
         {"valid", rec.valid},
         {"reward", rec.reward},
         {"advantage", rec.advantage}};
  if (rec.question) j["question"] = to_json(*rec.question);
  if (rec.intuitive_answer)
    j["intuitive_answer"] = to_string(*rec.intuitive_answer);
  if (rec.vote) j["vote"] = to_json(*rec.vote);
  return j;
}

Completion make_completion(const Generation& gen) {
  Completion c;
  c.text = gen.text;
  c.action_id = gen.action_id;
  if (gen.log_prob) {
    c.log_prob_current = *gen.log_prob;
    c.log_prob_old = *gen.log_prob;
  }
  return c;
}

std::optional<double> judged_mean(const std::vector<QuestionRecord>& records,
                                  PolicyBackend* judge) {
  if (!judge) return std::nullopt;
  std::vector<std::pair<McqQuestion, SceneRef>> questions;
  for (const auto& rec : records)
    if (rec.valid) questions.emplace_back(*rec.question, rec.scene);
  if (questions.empty()) return std::nullopt;
  const auto report = difficulty_report_for(questions, *judge);
  if (report.n == report.missing) return std::nullopt;
  return report.mean;
}

}  // namespace

double QuestionerPhaseResult::validity_rate() const {
  if (records.empty()) return 0.0;
  std::size_t valid = 0;
  for (const auto& r : records) valid += r.valid ? 1 : 0;
  return static_cast<double>(valid) / records.size();
}

double QuestionerPhaseResult::mean_reward() const {
  if (records.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : records) total += r.reward;
  return total / records.size();
}

double QuestionerPhaseResult::mean_confidence() const {
  double total = 0.0;
  std::size_t voted = 0;
  for (const auto& r : records) {
    if (!r.vote) continue;
    total += r.vote->confidence;
    voted += 1;
  }
  return voted ? total / voted : 0.0;
}

QuestionerPhaseResult run_questioner_phase(PolicyBackend& questioner,
                                           PolicyBackend& frozen_solver,
                                           const std::vector<SceneRef>& scenes,
                                           const LoopConfig& cfg) {
  if (scenes.empty())
    throw ContractViolation("questioner phase: no scenes");

  QuestionerPhaseResult result;
  for (const auto& scene : scenes) {
    result.scenes_attempted += 1;
    try {
      GenerateRequest req;
      req.system = prompts::kQuestionerSystem;
      req.user = prompts::kQuestionerUser;
      req.scene = scene;
      req.temperature = cfg.temperature;
      req.n = cfg.g_questioner;
      req.purpose = "questioner_sample";
      const auto generations = questioner.generate(req);

      GroupRollout group;
      group.scene_id = scene.id;
      group.prompt = req.user;
      std::vector<QuestionRecord> records;
      for (const auto& gen : generations) {
        QuestionRecord rec;
        rec.scene = scene;
        rec.raw_text = gen.text;
        const auto parsed = parse_questioner(gen.text);
        rec.valid = parsed.valid;
        rec.question = parsed.question;
        rec.intuitive_answer = parsed.intuitive_answer;
        if (!parsed.valid) {
          rec.reward = questioner_reward(parsed, std::nullopt);  // -1, no call
        } else {
          try {
            rec.vote =
                sample_and_vote(scene, *parsed.question, frozen_solver, cfg);
            rec.reward = questioner_reward(parsed, rec.vote);
          } catch (const NoReasoningSignal&) {
            // Well-formed question, no usable reasoning signal: the reward
            // floor of the divergence branch, not the format penalty.
            rec.reward = 0.0;
          }
        }
        group.completions.push_back(make_completion(gen));
        group.rewards.push_back(rec.reward);
        records.push_back(std::move(rec));
      }
      group.advantages = group_advantages(group.rewards, cfg.norm_epsilon);
      for (std::size_t j = 0; j < records.size(); ++j)
        records[j].advantage = group.advantages[j];
      result.groups.push_back(std::move(group));
      for (auto& rec : records) result.records.push_back(std::move(rec));
    } catch (const Error& e) {
      result.scenes_skipped += 1;
      std::cerr << "questioner phase: scene " << scene.id << " skipped: "
                << e.what() << "\n";
    }
  }
  if (result.groups.empty())
    throw Error("questioner phase: every scene failed");
  return result;
}

std::vector<GroupRollout> questioner_phase(PolicyBackend& questioner,
                                           PolicyBackend& frozen_solver,
                                           const std::vector<SceneRef>& scenes,
                                           const LoopConfig& cfg) {
  return run_questioner_phase(questioner, frozen_solver, scenes, cfg).groups;
}

double DatasetResult::retention_rate() const {
  return scenes_attempted > 0
             ? static_cast<double>(samples.size()) / scenes_attempted
             : 0.0;
}

DatasetResult run_build_dataset(PolicyBackend& questioner,
                                PolicyBackend& solver,
                                const std::vector<SceneRef>& scenes,
                                const LoopConfig& cfg, int iteration) {
  if (scenes.empty()) throw ContractViolation("build_dataset: no scenes");

  DatasetResult result;
  for (const auto& scene : scenes) {
    result.scenes_attempted += 1;
    try {
      std::optional<QuestionerOutput> accepted;
      for (int attempt = 0; attempt <= cfg.redraw_budget; ++attempt) {
        GenerateRequest req;
        req.system = prompts::kQuestionerSystem;
        req.user = prompts::kQuestionerUser;
        req.scene = scene;
        req.temperature = cfg.temperature;
        req.n = 1;
        req.purpose = "dataset_question";
        const auto generations = questioner.generate(req);
        const auto parsed = parse_questioner(generations.front().text);
        if (parsed.valid) {
          accepted = parsed;
          break;
        }
      }
      if (!accepted) {
        result.dropped_invalid += 1;
        continue;
      }

      VoteResult vote;
      try {
        vote = sample_and_vote(scene, *accepted->question, solver, cfg);
      } catch (const NoReasoningSignal&) {
        result.dropped_out_of_window += 1;  // c = 0, below any window
        continue;
      }
      const double s = vote.confidence;
      if (s < cfg.filter_low || s > cfg.filter_high) {
        result.dropped_out_of_window += 1;
        continue;
      }
      TrainingSample sample;
      sample.scene = scene;
      sample.question = *accepted->question;
      sample.pseudo_label = vote.pseudo_label;
      sample.difficulty = s;
      sample.iteration = iteration;
      sample.votes = vote.votes;
      result.samples.push_back(std::move(sample));
    } catch (const Error& e) {
      result.dropped_error += 1;
      std::cerr << "build_dataset: scene " << scene.id << " skipped: "
                << e.what() << "\n";
    }
  }
  return result;
}

std::vector<TrainingSample> build_dataset(PolicyBackend& questioner,
                                          PolicyBackend& solver,
                                          const std::vector<SceneRef>& scenes,
                                          const LoopConfig& cfg) {
  return run_build_dataset(questioner, solver, scenes, cfg, 0).samples;
}

std::vector<GroupRollout> solver_phase(PolicyBackend& solver,
                                       const std::vector<TrainingSample>& dataset,
                                       const LoopConfig& cfg) {
  if (dataset.empty()) throw ContractViolation("solver phase: empty dataset");

  std::vector<GroupRollout> groups;
  for (const auto& sample : dataset) {
    try {
      GenerateRequest req;
      req.system = prompts::kSolverSystem;
      req.user = prompts::solver_user(sample.question);
      req.scene = sample.scene;
      req.temperature = cfg.temperature;
      req.n = cfg.g_solver;
      req.purpose = "solver_group";
      const auto generations = solver.generate(req);

      GroupRollout group;
      group.scene_id = sample.scene.id;
      group.prompt = req.user;
      for (const auto& gen : generations) {
        group.completions.push_back(make_completion(gen));
        group.rewards.push_back(
            solver_reward(parse_solver(gen.text), sample.pseudo_label));
      }
      group.advantages = group_advantages(group.rewards, cfg.norm_epsilon);
      groups.push_back(std::move(group));
    } catch (const Error& e) {
      std::cerr << "solver phase: scene " << sample.scene.id << " skipped: "
                << e.what() << "\n";
    }
  }
  if (groups.empty()) throw Error("solver phase: every sample failed");
  return groups;
}

std::size_t export_batches(std::span<const GroupRollout> groups,
                           const std::filesystem::path& path) {
  if (groups.empty()) throw ContractViolation("export_batches: no groups");

  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string());
  std::size_t count = 0;
  for (const auto& group : groups) {
    for (std::size_t j = 0; j < group.completions.size(); ++j) {
      const auto& c = group.completions[j];
      json record{{"prompt", group.prompt},
                  {"completion", c.text},
                  {"reward", group.rewards[j]},
                  {"advantage", group.advantages[j]}};
      if (!c.action_id.empty()) record["old_logprob"] = c.log_prob_old;
      out << record.dump() << "\n";
      ++count;
    }
  }
  out.flush();
  if (!out) throw Error("write failed: " + path.string());
  return count;
}

json IterationMetrics::to_json() const {
  json j{{"iteration", iteration},
         {"scenes", scenes},
         {"generations", generations},
         {"validity_rate", validity_rate},
         {"mean_questioner_reward", mean_questioner_reward},
         {"mean_confidence", mean_confidence},
         {"retention_rate", retention_rate},
         {"dataset_size", dataset_size},
         {"mean_solver_reward", mean_solver_reward},
         {"kl_estimate", kl_estimate}};
  if (mean_judged_difficulty) j["mean_judged_difficulty"] = *mean_judged_difficulty;
  return j;
}

RunDir::RunDir(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
  std::filesystem::create_directories(root_ / "logs");
}

std::filesystem::path RunDir::iter_dir(int iteration) const {
  return root_ / ("iter_" + std::to_string(iteration));
}

bool RunDir::initialized() const {
  return std::filesystem::exists(manifest_path());
}

void RunDir::initialize(const json& manifest) {
  json m = manifest;
  if (!m.contains("iterations_completed")) m["iterations_completed"] = 0;
  write_atomic(manifest_path(), m.dump(2) + "\n");
}

json RunDir::manifest() const {
  std::ifstream in(manifest_path());
  if (!in) throw Error("run directory not initialized: " + root_.string());
  return json::parse(in);
}

void RunDir::update_manifest(const json& manifest) {
  write_atomic(manifest_path(), manifest.dump(2) + "\n");
}

int RunDir::iterations_completed() const {
  return manifest().value("iterations_completed", 0);
}

void RunDir::write_atomic(const std::filesystem::path& path,
                          const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp);
    out << content;
    out.flush();
    if (!out) throw Error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

IterationMetrics run_iteration(RunDir& run, const EngineBackends& backends,
                               const std::vector<SceneRef>& scene_pool,
                               const LoopConfig& cfg) {
  if (!backends.questioner || !backends.solver)
    throw ContractViolation("run_iteration: questioner and solver required");
  if (!run.initialized())
    throw ContractViolation("run_iteration: run directory not initialized");
  cfg.validate();

  const int iteration = run.iterations_completed();
  const auto scenes_q =
      slice_scene_pool(scene_pool, 2 * iteration, cfg.scenes_per_phase);
  const auto scenes_d =
      slice_scene_pool(scene_pool, 2 * iteration + 1, cfg.scenes_per_phase);

  // Freeze the feedback solver before anything trains this iteration.
  const PolicyBackend* frozen_src =
      (cfg.feedback_solver == FeedbackSolverMode::base && backends.base_solver)
          ? backends.base_solver
          : backends.solver;
  const auto frozen_solver = frozen_src->snapshot();

  auto qres =
      run_questioner_phase(*backends.questioner, *frozen_solver, scenes_q, cfg);
  if (backends.questioner->trainable())
    backends.questioner->apply_grpo_update(qres.groups, cfg);

  auto dres = run_build_dataset(*backends.questioner, *backends.solver,
                                scenes_d, cfg, iteration);

  std::vector<GroupRollout> sgroups;
  double mean_solver_reward = 0.0;
  if (!dres.samples.empty()) {
    sgroups = solver_phase(*backends.solver, dres.samples, cfg);
    std::size_t n = 0;
    for (const auto& g : sgroups)
      for (double r : g.rewards) {
        mean_solver_reward += r;
        n += 1;
      }
    if (n) mean_solver_reward /= static_cast<double>(n);
    if (backends.solver->trainable())
      backends.solver->apply_grpo_update(sgroups, cfg);
  }

  IterationMetrics metrics;
  metrics.iteration = iteration;
  metrics.scenes = qres.scenes_attempted;
  metrics.generations = static_cast<int>(qres.records.size());
  metrics.validity_rate = qres.validity_rate();
  metrics.mean_questioner_reward = qres.mean_reward();
  metrics.mean_confidence = qres.mean_confidence();
  metrics.retention_rate = dres.retention_rate();
  metrics.dataset_size = static_cast<int>(dres.samples.size());
  metrics.mean_solver_reward = mean_solver_reward;
  metrics.mean_judged_difficulty = judged_mean(qres.records, backends.judge);
  const bool logprobs = backends.questioner->returns_logprobs() &&
                        backends.solver->returns_logprobs();
  metrics.kl_estimate = logprobs ? "exact" : "omitted";

  // Persist the iteration: each artifact lands atomically.
  const auto dir = run.iter_dir(iteration);
  std::string questions;
  for (const auto& rec : qres.records)
    questions += question_record_to_json(rec).dump() + "\n";
  RunDir::write_atomic(dir / "questions.jsonl", questions);

  std::string dataset;
  for (const auto& sample : dres.samples)
    dataset += to_json(sample).dump() + "\n";
  RunDir::write_atomic(dir / "dataset.jsonl", dataset);

  std::vector<GroupRollout> all_groups = qres.groups;
  all_groups.insert(all_groups.end(), sgroups.begin(), sgroups.end());
  const auto batches_tmp = dir / "batches.jsonl.export";
  export_batches(all_groups, batches_tmp);
  std::filesystem::rename(batches_tmp, dir / "batches.jsonl");

  RunDir::write_atomic(dir / "metrics.json", metrics.to_json().dump(2) + "\n");

  auto manifest = run.manifest();
  manifest["iterations_completed"] = iteration + 1;
  run.update_manifest(manifest);
  return metrics;
}

EvalMetrics evaluate_questioner(const PolicyBackend& questioner,
                                const PolicyBackend& solver,
                                PolicyBackend* judge,
                                const std::vector<SceneRef>& scenes,
                                const LoopConfig& cfg) {
  // Run against snapshots so the measurement never advances the live run.
  const auto q = questioner.snapshot();
  const auto s = solver.snapshot();
  const auto res = run_questioner_phase(*q, *s, scenes, cfg);

  EvalMetrics metrics;
  metrics.validity_rate = res.validity_rate();
  metrics.mean_reward = res.mean_reward();
  metrics.mean_confidence = res.mean_confidence();
  metrics.generations = static_cast<int>(res.records.size());
  metrics.mean_judged_difficulty = judged_mean(res.records, judge);
  return metrics;
}

std::vector<SceneRef> slice_scene_pool(const std::vector<SceneRef>& pool,
                                       int block, int count) {
  std::vector<SceneRef> out;
  if (pool.empty() || count <= 0) return out;
  out.reserve(static_cast<std::size_t>(count));
  const std::size_t start =
      (static_cast<std::size_t>(block) * static_cast<std::size_t>(count)) %
      pool.size();
  for (int i = 0; i < count; ++i)
    out.push_back(pool[(start + static_cast<std::size_t>(i)) % pool.size()]);
  return out;
}

}  // namespace coevo
