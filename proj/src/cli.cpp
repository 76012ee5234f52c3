#include "coevo/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>

#include "coevo/audit.hpp"
#include "coevo/http_backend.hpp"
#include "coevo/parse.hpp"
#include "coevo/pipeline.hpp"
#include "coevo/serialize.hpp"
#include "coevo/sim.hpp"
#include "coevo/vote.hpp"

namespace coevo::cli {

using nlohmann::json;

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string env_api_key() {
  const char* v = std::getenv("COEVO_API_KEY");
  return v ? v : "";
}

std::unique_ptr<PolicyBackend> make_backend(const std::string& role,
                                            const json& spec,
                                            std::uint64_t seed,
                                            RequestLog* log) {
  const auto kind = spec.value("kind", "sim");
  std::unique_ptr<PolicyBackend> backend;
  if (kind == "sim") {
    const auto role_seed = mix_seed(seed, "backend:" + role);
    if (role == "questioner") {
      sim::SimQuestionerConfig cfg;
      cfg.validity_rate = spec.value("validity_rate", cfg.validity_rate);
      cfg.lr_scale = spec.value("lr_scale", cfg.lr_scale);
      if (spec.contains("tier_weights")) {
        const auto w = spec.at("tier_weights").get<std::vector<double>>();
        if (w.size() != 3) throw ConfigError(role + ".tier_weights needs 3 values");
        std::copy(w.begin(), w.end(), cfg.tier_weights.begin());
      }
      backend = std::make_unique<sim::SimQuestionerBackend>(role_seed, cfg);
    } else if (role == "solver" || role == "base_solver") {
      sim::SimSolverConfig cfg;
      cfg.lr_scale = spec.value("lr_scale", cfg.lr_scale);
      if (spec.contains("accuracy")) {
        const auto a = spec.at("accuracy").get<std::vector<double>>();
        if (a.size() != 3) throw ConfigError(role + ".accuracy needs 3 values");
        std::copy(a.begin(), a.end(), cfg.accuracy.begin());
      }
      backend = std::make_unique<sim::SimSolverBackend>(
          mix_seed(seed, "backend:solver"), cfg);
    } else {
      backend = std::make_unique<sim::SimJudgeBackend>(role_seed);
    }
  } else if (kind == "http") {
    HttpBackendOptions opts;
    opts.endpoint = spec.value("endpoint", "");
    opts.model = spec.value("model", "");
    opts.api_key = spec.value("api_key", "");
    opts.timeout_ms = spec.value("timeout_ms", opts.timeout_ms);
    opts.max_retries = spec.value("max_retries", opts.max_retries);
    opts.apply_environment();
    const auto env_key = env_api_key();
    if (!env_key.empty()) opts.api_key = env_key;  // secrets: env wins
    backend = std::make_unique<HttpBackend>(std::move(opts));
  } else {
    throw ConfigError(role + ".kind must be 'sim' or 'http', got '" + kind +
                      "'");
  }
  backend->set_request_log(log);
  return backend;
}

std::vector<SceneRef> image_scenes(const json& config) {
  std::vector<SceneRef> scenes;
  if (!config.contains("scenes"))
    throw ConfigError("http backends need a 'scenes' list of image paths");
  int i = 0;
  for (const auto& entry : config.at("scenes")) {
    SceneRef scene;
    scene.source = ImagePath{entry.get<std::string>()};
    scene.id = "img-" + std::to_string(i++);
    scenes.push_back(std::move(scene));
  }
  if (scenes.empty()) throw ConfigError("'scenes' list is empty");
  return scenes;
}

struct IterateArgs {
  std::string config_path;
  int iterations = 1;
  std::optional<std::uint64_t> seed;
  std::string backend_override;  // "", "sim" or "http"
  std::string run_dir_override;
  LoopConfig flags;  // bound to the loop options
};

int cmd_iterate(const CLI::App& cmd, IterateArgs& args) {
  json config = json::object();
  if (!args.config_path.empty()) config = load_json_file(args.config_path);

  LoopConfig cfg = loop_config_from_json(config.value("loop", json::object()));

  // Flags passed explicitly override the config file.
  const auto passed = [&](const std::string& name) {
    return cmd.count(name) > 0;
  };
  if (passed("--m")) cfg.m = args.flags.m;
  if (passed("--g-questioner")) cfg.g_questioner = args.flags.g_questioner;
  if (passed("--g-solver")) cfg.g_solver = args.flags.g_solver;
  if (passed("--temperature")) cfg.temperature = args.flags.temperature;
  if (passed("--clip-epsilon")) cfg.clip_epsilon = args.flags.clip_epsilon;
  if (passed("--kl-beta")) cfg.kl_beta = args.flags.kl_beta;
  if (passed("--norm-epsilon")) cfg.norm_epsilon = args.flags.norm_epsilon;
  if (passed("--low")) cfg.filter_low = args.flags.filter_low;
  if (passed("--high")) cfg.filter_high = args.flags.filter_high;
  if (passed("--learning-rate")) cfg.learning_rate = args.flags.learning_rate;
  if (passed("--scenes-per-phase"))
    cfg.scenes_per_phase = args.flags.scenes_per_phase;

  json backends_cfg = config.value("backends", json::object());
  if (!args.backend_override.empty()) {
    for (const char* role : {"questioner", "solver", "judge"}) {
      if (!backends_cfg.contains(role)) backends_cfg[role] = json::object();
      backends_cfg[role]["kind"] = args.backend_override;
    }
  }
  const auto role_kind = [&](const char* role) {
    return backends_cfg.value(role, json::object()).value("kind", "sim");
  };
  const bool any_sim = role_kind("questioner") == "sim" ||
                       role_kind("solver") == "sim";

  if (args.seed) {
    cfg.seed = *args.seed;
  } else if (config.contains("loop") && config["loop"].contains("seed")) {
    cfg.seed = config["loop"]["seed"].get<std::uint64_t>();
  } else if (any_sim) {
    throw ConfigError("--seed is required when a backend is simulated");
  }
  cfg.validate();

  std::string run_dir = !args.run_dir_override.empty()
                            ? args.run_dir_override
                            : config.value("run_dir", std::string{});
  if (run_dir.empty()) throw ConfigError("run_dir not set (flag or config)");

  RunDir run{run_dir};
  RequestLog log{run.requests_log_path()};

  auto questioner = make_backend(
      "questioner", backends_cfg.value("questioner", json::object()), cfg.seed,
      &log);
  auto solver = make_backend(
      "solver", backends_cfg.value("solver", json::object()), cfg.seed, &log);
  std::unique_ptr<PolicyBackend> judge;
  if (role_kind("questioner") == "sim" || backends_cfg.contains("judge"))
    judge = make_backend("judge", backends_cfg.value("judge", json::object()),
                         cfg.seed, &log);
  std::unique_ptr<PolicyBackend> base_solver;
  if (cfg.feedback_solver == FeedbackSolverMode::base)
    base_solver = make_backend("base_solver",
                               backends_cfg.value("solver", json::object()),
                               cfg.seed, &log);

  std::vector<SceneRef> pool;
  if (role_kind("questioner") == "sim") {
    const int pool_size =
        config.value("scene_pool", 4 * cfg.scenes_per_phase);
    pool = sim::make_scenes(cfg.seed, "pool", pool_size);
  } else {
    pool = image_scenes(config);
  }

  if (!run.initialized()) {
    json manifest{{"loop", to_json(cfg)},
                  {"backends", backends_cfg},
                  {"scene_pool_size", pool.size()},
                  {"engine", "coevo 0.1"}};
    run.initialize(manifest);
  }

  EngineBackends engine{questioner.get(), solver.get(), judge.get(),
                        base_solver.get()};
  for (int i = 0; i < args.iterations; ++i) {
    const auto metrics = run_iteration(run, engine, pool, cfg);
    std::cout << "iter " << metrics.iteration
              << "  validity=" << metrics.validity_rate
              << "  reward=" << metrics.mean_questioner_reward
              << "  confidence=" << metrics.mean_confidence
              << "  retention=" << metrics.retention_rate
              << "  dataset=" << metrics.dataset_size;
    if (metrics.mean_judged_difficulty)
      std::cout << "  difficulty=" << *metrics.mean_judged_difficulty;
    std::cout << "\n";
  }
  return 0;
}

struct VoteArgs {
  std::string input;
  std::string output;
  int m = LoopConfig{}.m;
};

int cmd_vote(const VoteArgs& args) {
  std::ifstream in(args.input);
  if (!in) throw ConfigError("cannot open " + args.input);
  const std::string out_path =
      args.output.empty() ? args.input + ".votes.jsonl" : args.output;
  std::ofstream out(out_path, std::ios::app);
  if (!out) throw Error("cannot open " + out_path);

  std::string line;
  std::size_t line_no = 0, voted = 0, abstained = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError(args.input + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
    if (!row.contains("responses") || !row["responses"].is_array())
      throw ConfigError(args.input + ":" + std::to_string(line_no) +
                        ": missing 'responses' array");
    const auto& responses = row["responses"];
    if (responses.size() != static_cast<std::size_t>(args.m))
      throw ConfigError(args.input + ":" + std::to_string(line_no) +
                        ": expected " + std::to_string(args.m) +
                        " responses, found " +
                        std::to_string(responses.size()));
    std::vector<std::optional<OptionLabel>> votes;
    for (const auto& r : responses)
      votes.push_back(parse_solver(r.get<std::string>()));

    json result{{"id", row.value("id", json(line_no))}};
    try {
      result.update(to_json(majority_vote(votes, args.m)));
      ++voted;
    } catch (const NoReasoningSignal& e) {
      result["error"] = e.what();
      ++abstained;
    }
    out << result.dump() << "\n";
  }
  std::cout << "voted=" << voted << " no_signal=" << abstained << " -> "
            << out_path << "\n";
  return 0;
}

struct FilterArgs {
  std::string input;
  std::string output;
  double low = LoopConfig{}.filter_low;
  double high = LoopConfig{}.filter_high;
};

int cmd_filter(const FilterArgs& args) {
  std::ifstream in(args.input);
  if (!in) throw ConfigError("cannot open " + args.input);
  const std::string out_path =
      args.output.empty() ? args.input + ".filtered.jsonl" : args.output;
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw Error("cannot open " + out_path);

  std::string line;
  std::size_t line_no = 0, retained = 0, dropped = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError(args.input + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
    if (!row.contains("difficulty") || !row["difficulty"].is_number())
      throw ConfigError(args.input + ":" + std::to_string(line_no) +
                        ": missing numeric 'difficulty'");
    const double s = row["difficulty"].get<double>();
    if (s >= args.low && s <= args.high) {
      out << row.dump() << "\n";
      ++retained;
    } else {
      ++dropped;
    }
  }
  std::cout << "retained=" << retained << " dropped=" << dropped << " -> "
            << out_path << "\n";
  return 0;
}

struct AuditArgs {
  std::string input;
  std::string judge_kind = "sim";
  std::string endpoint;
  std::string model;
  std::string output;
  std::uint64_t seed = 0;
};

int cmd_audit(const AuditArgs& args) {
  std::unique_ptr<PolicyBackend> judge;
  if (args.judge_kind == "sim") {
    judge = std::make_unique<sim::SimJudgeBackend>(args.seed);
  } else if (args.judge_kind == "http") {
    HttpBackendOptions opts;
    opts.endpoint = args.endpoint;
    opts.model = args.model;
    opts.apply_environment();
    const auto env_key = env_api_key();
    if (!env_key.empty()) opts.api_key = env_key;
    judge = std::make_unique<HttpBackend>(std::move(opts));
  } else {
    throw ConfigError("--judge must be 'sim' or 'http'");
  }

  const auto report = difficulty_report(args.input, *judge);
  std::cout << report.to_table();
  if (!args.output.empty())
    RunDir::write_atomic(args.output, report.to_json().dump(2) + "\n");
  return 0;
}

struct ExportArgs {
  std::string input;
  std::string output;
};

int cmd_export(const ExportArgs& args) {
  std::ifstream in(args.input);
  if (!in) throw ConfigError("cannot open " + args.input);
  std::vector<GroupRollout> groups;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      groups.push_back(group_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ConfigError(args.input + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  if (groups.empty())
    throw ConfigError(args.input + ": no groups to export");
  const auto count = export_batches(groups, args.output);
  std::cout << "exported=" << count << " -> " << args.output << "\n";
  return 0;
}

}  // namespace

void add_loop_options(CLI::App& app, LoopConfig& cfg) {
  app.add_option("--m", cfg.m, "Majority-vote sample size")
      ->capture_default_str();
  app.add_option("--g-questioner", cfg.g_questioner,
                 "Group size for Questioner training")
      ->capture_default_str();
  app.add_option("--g-solver", cfg.g_solver, "Group size for Solver training")
      ->capture_default_str();
  app.add_option("--temperature", cfg.temperature, "Sampling temperature")
      ->capture_default_str();
  app.add_option("--clip-epsilon", cfg.clip_epsilon, "Surrogate clip range")
      ->capture_default_str();
  app.add_option("--kl-beta", cfg.kl_beta, "KL penalty coefficient")
      ->capture_default_str();
  app.add_option("--norm-epsilon", cfg.norm_epsilon,
                 "Advantage z-score denominator guard")
      ->capture_default_str();
  app.add_option("--low", cfg.filter_low, "Difficulty filter lower bound")
      ->capture_default_str();
  app.add_option("--high", cfg.filter_high, "Difficulty filter upper bound")
      ->capture_default_str();
  app.add_option("--learning-rate", cfg.learning_rate,
                 "Step size for the built-in softmax policy")
      ->capture_default_str();
  app.add_option("--scenes-per-phase", cfg.scenes_per_phase,
                 "Scenes fed to each phase per iteration")
      ->capture_default_str();
}

int run(int argc, const char* const* argv) {
  CLI::App app{"coevo: Questioner-Solver self-play curriculum engine"};
  app.require_subcommand(1);

  IterateArgs iterate_args;
  auto* iterate = app.add_subcommand(
      "iterate", "Run co-evolution iterations against a config");
  iterate->add_option("config", iterate_args.config_path,
                      "JSON config file (loop + backends + run_dir)");
  iterate->add_option("--iterations", iterate_args.iterations,
                      "Iterations to run")
      ->capture_default_str();
  iterate->add_option("--seed", iterate_args.seed,
                      "Run seed (required for simulated backends)");
  iterate->add_option("--backend", iterate_args.backend_override,
                      "Force all backend kinds: sim|http")
      ->check(CLI::IsMember({"sim", "http"}));
  iterate->add_option("--run-dir", iterate_args.run_dir_override,
                      "Run directory (overrides config)");
  add_loop_options(*iterate, iterate_args.flags);

  VoteArgs vote_args;
  auto* vote = app.add_subcommand(
      "vote", "Majority-vote pre-sampled solver responses");
  vote->add_option("input", vote_args.input, "JSONL of {id, responses[]}")
      ->required();
  vote->add_option("--m", vote_args.m, "Votes per question")
      ->capture_default_str();
  vote->add_option("--out", vote_args.output, "Output path (appends)");

  FilterArgs filter_args;
  auto* filter = app.add_subcommand(
      "filter", "Apply the difficulty window to dataset rows");
  filter->add_option("input", filter_args.input, "JSONL with 'difficulty'")
      ->required();
  filter->add_option("--low", filter_args.low, "Lower bound, inclusive")
      ->capture_default_str();
  filter->add_option("--high", filter_args.high, "Upper bound, inclusive")
      ->capture_default_str();
  filter->add_option("--out", filter_args.output, "Output path");

  AuditArgs audit_args;
  auto* audit = app.add_subcommand(
      "audit", "Validity + judged-difficulty report over questions.jsonl");
  audit->add_option("input", audit_args.input, "questions.jsonl corpus")
      ->required();
  audit->add_option("--judge", audit_args.judge_kind, "sim|http")
      ->capture_default_str();
  audit->add_option("--endpoint", audit_args.endpoint, "http judge endpoint");
  audit->add_option("--model", audit_args.model, "http judge model");
  audit->add_option("--seed", audit_args.seed, "sim judge seed");
  audit->add_option("--out", audit_args.output, "Write JSON report here");

  ExportArgs export_args;
  auto* exp = app.add_subcommand(
      "export", "Flatten rollout groups into trainer batch records");
  exp->add_option("input", export_args.input, "groups JSONL")->required();
  exp->add_option("output", export_args.output, "batches JSONL")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (iterate->parsed()) return cmd_iterate(*iterate, iterate_args);
    if (vote->parsed()) return cmd_vote(vote_args);
    if (filter->parsed()) return cmd_filter(filter_args);
    if (audit->parsed()) return cmd_audit(audit_args);
    if (exp->parsed()) return cmd_export(export_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace coevo::cli
