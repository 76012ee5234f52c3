#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include <httplib.h>

#include "coevo/grpo.hpp"
#include "coevo/http_backend.hpp"
#include "coevo/parse.hpp"
#include "coevo/pipeline.hpp"
#include "coevo/prompts.hpp"
#include "coevo/serialize.hpp"
#include "coevo/sim.hpp"
#include "test_support.hpp"

using namespace coevo;
using testsupport::ScriptedBackend;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<nlohmann::json> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
  return rows;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in),
          std::istreambuf_iterator<char>()};
}

// A questioner whose 4-generation groups are two valid renders and two
// grammar violations, built from real scene templates.
ScriptedBackend half_valid_questioner() {
  return ScriptedBackend([](const GenerateRequest& req) {
    std::vector<std::string> out;
    for (int i = 0; i < req.n; ++i) {
      if (i % 2 == 0) {
        const auto rq =
            sim::render_template(i % 4 == 0 ? "read" : "measure", req.scene);
        out.push_back(render_questioner_output("a scene", rq.question,
                                               rq.intuition));
      } else {
        out.push_back("<question>broken A. 1 B. 2 C. 3</question>");
      }
    }
    return out;
  });
}

struct SimWorldFixture {
  sim::SimQuestionerBackend questioner;
  sim::SimSolverBackend solver;
  sim::SimJudgeBackend judge;
  std::vector<SceneRef> pool;

  explicit SimWorldFixture(std::uint64_t seed, int pool_size = 96)
      : questioner(mix_seed(seed, "q")),
        solver(mix_seed(seed, "s")),
        judge(mix_seed(seed, "j")),
        pool(sim::make_scenes(seed, "pool", pool_size)) {}

  EngineBackends engine() {
    return EngineBackends{&questioner, &solver, &judge, nullptr};
  }
};

LoopConfig sim_cfg(std::uint64_t seed) {
  LoopConfig cfg;
  cfg.seed = seed;
  cfg.scenes_per_phase = 24;
  cfg.learning_rate = 20.0;
  return cfg;
}

}  // namespace

TEST_CASE("questioner phase rewards valid and invalid members per contract") {
  auto questioner = half_valid_questioner();
  auto solver = ScriptedBackend::fixed_answer('A');

  const auto log_path = fresh_dir("coevo_phase_log") / "requests.jsonl";
  RequestLog log(log_path);
  questioner.set_request_log(&log);
  solver.set_request_log(&log);

  LoopConfig cfg;
  const auto scenes = sim::make_scenes(21, "phase", 3);
  const auto result = run_questioner_phase(questioner, solver, scenes, cfg);

  REQUIRE(result.groups.size() == 3);
  REQUIRE(result.records.size() == 12);
  int valid_count = 0;
  for (const auto& rec : result.records) {
    if (rec.valid) {
      ++valid_count;
      CHECK(rec.reward >= 0.0);
      CHECK(rec.reward <= 0.5);
      REQUIRE(rec.vote.has_value());
    } else {
      CHECK(rec.reward == -1.0);
      CHECK_FALSE(rec.vote.has_value());
    }
  }
  CHECK(valid_count == 6);
  CHECK(result.validity_rate() == doctest::Approx(0.5));

  // the audit trail: exactly one solver_vote call per valid member, none for
  // the invalid ones
  int vote_calls = 0;
  for (const auto& row : read_jsonl(log_path)) {
    if (row.at("purpose") == "solver_vote") {
      ++vote_calls;
      CHECK(row.at("n") == cfg.m);
    }
  }
  CHECK(vote_calls == valid_count);
}

TEST_CASE("an all-invalid group carries zero advantages") {
  auto questioner = ScriptedBackend([](const GenerateRequest& req) {
    return std::vector<std::string>(static_cast<std::size_t>(req.n),
                                    "no tags at all");
  });
  auto solver = ScriptedBackend::fixed_answer('A');
  LoopConfig cfg;
  const auto scenes = sim::make_scenes(22, "inv", 1);
  const auto groups = questioner_phase(questioner, solver, scenes, cfg);
  REQUIRE(groups.size() == 1);
  for (double r : groups[0].rewards) CHECK(r == -1.0);
  for (double a : groups[0].advantages) CHECK(a == 0.0);
}

TEST_CASE("a lone mid-confidence trap question wins the group advantage") {
  // Hand-built group: rewards computed through the reward path, then
  // z-scored. The trap member (divergent vote at c=0.76) must dominate.
  const auto scene = testsupport::sim_scene(23);
  const auto trap = sim::render_template("pivot", scene);
  const auto easy = sim::render_template("read", scene);
  REQUIRE(trap.intuition != trap.correct);

  auto questioner = ScriptedBackend([&](const GenerateRequest&) {
    return std::vector<std::string>{
        "garbage output",
        render_questioner_output("d", easy.question, easy.intuition),
        render_questioner_output("d", trap.question, trap.intuition),
        render_questioner_output("d", easy.question, easy.intuition),
    };
  });
  // Solver: perfectly confident on the easy read question; 8-of-10 majority
  // on the trap's true answer (c = 0.8, divergence branch).
  auto solver = ScriptedBackend([&](const GenerateRequest& req) {
    const auto body = req.user.substr(req.user.rfind("\n\n") + 2);
    const auto q = parse_mcq_text(body);
    REQUIRE(q.has_value());
    std::vector<std::string> out;
    const bool is_trap = *q == trap.question;
    for (int i = 0; i < req.n; ++i) {
      OptionLabel label = easy.correct;
      if (is_trap) label = (i % 4 == 3) ? trap.intuition : trap.correct;
      out.push_back("\\boxed{" + to_string(label) + "}");
    }
    return out;
  });

  // rewards: invalid -1, easy consistency min(1,0)=0, trap 0.5*0.8=0.4
  LoopConfig cfg;
  const auto groups =
      questioner_phase(questioner, solver, {scene}, cfg);
  REQUIRE(groups.size() == 1);
  const auto& g = groups[0];
  REQUIRE(g.rewards.size() == 4);
  CHECK(g.rewards[0] == -1.0);
  CHECK(g.rewards[1] == 0.0);       // c=1.0 consistency -> min(1,0)=0
  CHECK(g.rewards[2] == doctest::Approx(0.4));  // 0.5 * 0.8 divergence
  CHECK(g.rewards[3] == 0.0);
  for (std::size_t j = 0; j < 4; ++j)
    if (j != 2) CHECK(g.advantages[2] > g.advantages[j]);
}

TEST_CASE("build_dataset keeps the inclusive window and drops outside it") {
  const auto scene_list = sim::make_scenes(24, "win", 1);
  const auto rendered = sim::render_template("read", scene_list[0]);
  auto questioner = ScriptedBackend([&](const GenerateRequest& req) {
    return std::vector<std::string>(
        static_cast<std::size_t>(req.n),
        render_questioner_output("d", rendered.question, rendered.intuition));
  });

  auto with_confidence = [&](int label_votes) {
    // label_votes boxed answers for A, the rest unparseable -> c = votes/10
    return ScriptedBackend([label_votes](const GenerateRequest& req) {
      std::vector<std::string> out;
      for (int i = 0; i < req.n; ++i)
        out.push_back(i < label_votes ? "\\boxed{A}" : "no answer");
      return out;
    });
  };

  LoopConfig cfg;
  SUBCASE("s = 0.3 kept") {
    auto solver = with_confidence(3);
    const auto samples = build_dataset(questioner, solver, scene_list, cfg);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].difficulty == 0.3);
    CHECK(samples[0].pseudo_label == OptionLabel::A);
    CHECK(samples[0].votes.size() == 3);
  }
  SUBCASE("s = 0.8 kept") {
    auto solver = with_confidence(8);
    const auto samples = build_dataset(questioner, solver, scene_list, cfg);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].difficulty == 0.8);
  }
  SUBCASE("s = 0.9 dropped as too simple") {
    auto solver = with_confidence(9);
    CHECK(build_dataset(questioner, solver, scene_list, cfg).empty());
  }
  SUBCASE("s = 0.2 dropped as too ambiguous") {
    auto solver = with_confidence(2);
    CHECK(build_dataset(questioner, solver, scene_list, cfg).empty());
  }
  SUBCASE("all-abstain votes drop the scene instead of erroring") {
    auto solver = with_confidence(0);
    CHECK(build_dataset(questioner, solver, scene_list, cfg).empty());
  }
}

TEST_CASE("build_dataset re-draws invalid questions within the budget") {
  const auto scene_list = sim::make_scenes(25, "redraw", 1);
  const auto rendered = sim::render_template("read", scene_list[0]);

  SUBCASE("a valid draw inside the budget rescues the scene") {
    int draws = 0;
    auto questioner = ScriptedBackend([&](const GenerateRequest&) {
      ++draws;
      if (draws < 3)
        return std::vector<std::string>{"still broken"};
      return std::vector<std::string>{render_questioner_output(
          "d", rendered.question, rendered.intuition)};
    });
    auto solver = ScriptedBackend([](const GenerateRequest& req) {
      std::vector<std::string> out;
      for (int i = 0; i < req.n; ++i)
        out.push_back(i < 6 ? "\\boxed{A}" : "\\boxed{B}");
      return out;
    });
    LoopConfig cfg;  // redraw_budget = 3 -> up to 4 draws
    const auto samples = build_dataset(questioner, solver, scene_list, cfg);
    CHECK(draws == 3);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].difficulty == 0.6);
  }

  SUBCASE("budget exhaustion drops the scene") {
    int draws = 0;
    auto questioner = ScriptedBackend([&](const GenerateRequest&) {
      ++draws;
      return std::vector<std::string>{"never valid"};
    });
    auto solver = ScriptedBackend::fixed_answer('A');
    LoopConfig cfg;
    CHECK(build_dataset(questioner, solver, scene_list, cfg).empty());
    CHECK(draws == 1 + cfg.redraw_budget);
  }
}

TEST_CASE("tier-0 retention under a strong solver matches the binomial tail") {
  // All questions drawn from tier-0 templates; solver accuracy 0.95. The
  // oracle is P(3 <= X <= 8) for X ~ Binomial(10, 0.95), i.e. the chance the
  // vote confidence lands in the window at all.
  sim::SimQuestionerConfig qcfg;
  qcfg.validity_rate = 1.0;
  qcfg.tier_weights = {1.0, 0.0, 0.0};
  sim::SimQuestionerBackend questioner(31, qcfg);
  sim::SimSolverConfig scfg;
  scfg.accuracy = {0.95, 0.95, 0.95};
  sim::SimSolverBackend solver(32, scfg);

  LoopConfig cfg;
  const auto scenes = sim::make_scenes(33, "tail", 400);
  const auto result = run_build_dataset(questioner, solver, scenes, cfg, 0);

  double oracle = 0.0;
  for (int k = 3; k <= 8; ++k) {
    double pmf = 1.0;
    for (int i = 0; i < k; ++i) pmf *= 0.95;
    for (int i = 0; i < 10 - k; ++i) pmf *= 0.05;
    double binom = 1.0;
    for (int i = 0; i < k; ++i) binom = binom * (10 - i) / (i + 1);
    oracle += binom * pmf;
  }
  // oracle ~= 0.086: near-zero retention, tolerance 3 sigma of 400 trials
  const double sigma = std::sqrt(oracle * (1 - oracle) / 400);
  CHECK(result.retention_rate() ==
        doctest::Approx(oracle).epsilon(3 * sigma / oracle));
}

TEST_CASE("solver phase z-scores binary rewards inside each group") {
  const auto scene_list = sim::make_scenes(26, "sp", 1);
  const auto rendered = sim::render_template("measure", scene_list[0]);
  TrainingSample sample;
  sample.scene = scene_list[0];
  sample.question = rendered.question;
  sample.pseudo_label = OptionLabel::A;
  sample.difficulty = 0.5;

  SUBCASE("rewards [1,1,0,0,0] give the documented z-scores") {
    auto solver = ScriptedBackend([](const GenerateRequest& req) {
      std::vector<std::string> out;
      for (int i = 0; i < req.n; ++i)
        out.push_back(i < 2 ? "\\boxed{A}" : "\\boxed{B}");
      return out;
    });
    LoopConfig cfg;
    cfg.norm_epsilon = 1e-12;  // compare against the exact-limit values
    const auto groups = solver_phase(solver, {sample}, cfg);
    REQUIRE(groups.size() == 1);
    const auto& g = groups[0];
    REQUIRE(g.rewards.size() == 5);
    CHECK(g.advantages[0] == doctest::Approx(1.224744871).epsilon(1e-6));
    CHECK(g.advantages[1] == doctest::Approx(1.224744871).epsilon(1e-6));
    for (int j = 2; j < 5; ++j)
      CHECK(g.advantages[j] == doctest::Approx(-0.816496581).epsilon(1e-6));
  }

  SUBCASE("an all-correct group has zero advantages") {
    auto solver = ScriptedBackend::fixed_answer('A');
    LoopConfig cfg;
    const auto groups = solver_phase(solver, {sample}, cfg);
    for (double a : groups[0].advantages) CHECK(a == 0.0);
  }

  SUBCASE("unparseable completions score zero but stay in the group") {
    auto solver = ScriptedBackend([](const GenerateRequest& req) {
      std::vector<std::string> out;
      for (int i = 0; i < req.n; ++i)
        out.push_back(i == 0 ? std::string("mumble") : "\\boxed{A}");
      return out;
    });
    LoopConfig cfg;
    const auto groups = solver_phase(solver, {sample}, cfg);
    REQUIRE(groups[0].rewards.size() == 5);
    CHECK(groups[0].rewards[0] == 0.0);
    for (int j = 1; j < 5; ++j) CHECK(groups[0].rewards[j] == 1.0);
  }
}

TEST_CASE("export_batches writes one record per completion and round-trips") {
  std::vector<GroupRollout> groups;
  Rng rng(27);
  for (int gi = 0; gi < 3; ++gi) {
    GroupRollout g;
    g.scene_id = "s" + std::to_string(gi);
    g.prompt = "prompt " + std::to_string(gi);
    for (int j = 0; j < 5; ++j) {
      Completion c;
      c.text = "completion " + std::to_string(j);
      c.action_id = "a";
      c.log_prob_old = -rng.uniform();
      c.log_prob_current = c.log_prob_old;
      g.completions.push_back(c);
      g.rewards.push_back(rng.uniform());
    }
    g.advantages = group_advantages(g.rewards, 1e-6);
    groups.push_back(g);
  }

  const auto dir = fresh_dir("coevo_export");
  std::filesystem::create_directories(dir);
  const auto path = dir / "batches.jsonl";
  CHECK(export_batches(groups, path) == 15);

  const auto rows = read_jsonl(path);
  REQUIRE(rows.size() == 15);
  std::size_t idx = 0;
  for (const auto& g : groups) {
    for (std::size_t j = 0; j < 5; ++j, ++idx) {
      CHECK(rows[idx].at("prompt") == g.prompt);
      CHECK(rows[idx].at("completion") == g.completions[j].text);
      // bit-exact float round-trip
      CHECK(rows[idx].at("advantage").get<double>() == g.advantages[j]);
      CHECK(rows[idx].at("old_logprob").get<double>() ==
            g.completions[j].log_prob_old);
    }
  }

  CHECK_THROWS_AS(export_batches(std::vector<GroupRollout>{}, path),
                  ContractViolation);
}

TEST_CASE("run_iteration persists artifacts and advances the counter") {
  SimWorldFixture world(100);
  RunDir run(fresh_dir("coevo_run_basic"));
  run.initialize({{"note", "test"}});
  RequestLog log(run.requests_log_path());
  world.questioner.set_request_log(&log);
  world.solver.set_request_log(&log);

  const auto cfg = sim_cfg(100);
  const auto m0 = run_iteration(run, world.engine(), world.pool, cfg);
  const auto m1 = run_iteration(run, world.engine(), world.pool, cfg);

  CHECK(m0.iteration == 0);
  CHECK(m1.iteration == 1);
  CHECK(run.iterations_completed() == 2);

  for (int k = 0; k < 2; ++k) {
    const auto dir = run.iter_dir(k);
    CHECK(std::filesystem::exists(dir / "questions.jsonl"));
    CHECK(std::filesystem::exists(dir / "dataset.jsonl"));
    CHECK(std::filesystem::exists(dir / "batches.jsonl"));
    CHECK(std::filesystem::exists(dir / "metrics.json"));

    // every dataset row sits inside the difficulty window
    for (const auto& row : read_jsonl(dir / "dataset.jsonl")) {
      const double s = row.at("difficulty").get<double>();
      CHECK(s >= cfg.filter_low);
      CHECK(s <= cfg.filter_high);
      CHECK(row.at("iteration") == k);
    }

    const auto metrics =
        nlohmann::json::parse(read_file(dir / "metrics.json"));
    CHECK(metrics.at("iteration") == k);
    CHECK(metrics.at("kl_estimate") == "exact");
    CHECK(metrics.contains("mean_judged_difficulty"));
  }

  // the questioner actually trained toward validity
  CHECK(m1.validity_rate > m0.validity_rate);
}

TEST_CASE("identical seeds produce byte-identical dataset files") {
  auto run_once = [](const std::string& dir_name) {
    SimWorldFixture world(4242);
    RunDir run(fresh_dir(dir_name));
    run.initialize({});
    const auto cfg = sim_cfg(4242);
    run_iteration(run, world.engine(), world.pool, cfg);
    run_iteration(run, world.engine(), world.pool, cfg);
    return run.root();
  };

  const auto a = run_once("coevo_det_a");
  const auto b = run_once("coevo_det_b");
  for (int k = 0; k < 2; ++k) {
    CHECK(read_file(a / ("iter_" + std::to_string(k)) / "dataset.jsonl") ==
          read_file(b / ("iter_" + std::to_string(k)) / "dataset.jsonl"));
    CHECK(read_file(a / ("iter_" + std::to_string(k)) / "questions.jsonl") ==
          read_file(b / ("iter_" + std::to_string(k)) / "questions.jsonl"));
    CHECK(read_file(a / ("iter_" + std::to_string(k)) / "metrics.json") ==
          read_file(b / ("iter_" + std::to_string(k)) / "metrics.json"));
  }
}

TEST_CASE("http and sim backends produce the same trace schema") {
  // Stub server playing all three roles, keyed off the system prompt.
  httplib::Server server;
  server.Post("/v1/chat/completions", [](const httplib::Request& req,
                                         httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    const auto system = body["messages"][0]["content"].get<std::string>();
    const int n = body["n"].get<int>();
    std::vector<std::string> texts;
    if (system.find("designer") != std::string::npos) {
      texts.assign(static_cast<std::size_t>(n),
                   "<description>a figure</description>\n<question>Given "
                   "that the width is 6 and the height is 2, what is the "
                   "perimeter?\nA. 16 B. 12 C. 14 D. 20</question>\n"
                   "<answer>A</answer>");
    } else if (system.find("solver") != std::string::npos) {
      for (int i = 0; i < n; ++i)
        texts.push_back(i % 5 < 3 ? "<think>t</think>\\boxed{A}"
                                  : "<think>t</think>\\boxed{B}");
    } else {
      texts.assign(static_cast<std::size_t>(n), "0.55");
    }
    nlohmann::json choices = nlohmann::json::array();
    for (const auto& t : texts)
      choices.push_back({{"message", {{"content", t}}}});
    res.set_content(nlohmann::json{{"choices", choices}}.dump(),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread listener([&server] { server.listen_after_bind(); });
  server.wait_until_ready();

  // http run over two tiny image scenes
  HttpBackendOptions opts;
  opts.endpoint = "http://127.0.0.1:" + std::to_string(port);
  opts.model = "stub";
  HttpBackend hq(opts), hs(opts), hj(opts);
  std::vector<SceneRef> image_pool;
  for (int i = 0; i < 2; ++i) {
    const auto path = std::filesystem::temp_directory_path() /
                      ("coevo_schema_" + std::to_string(i) + ".png");
    std::ofstream(path, std::ios::binary) << "png-bytes";
    image_pool.push_back(SceneRef{"img-" + std::to_string(i),
                                  ImagePath{path.string()}});
  }
  RunDir http_run(fresh_dir("coevo_schema_http"));
  http_run.initialize({});
  LoopConfig http_cfg;
  http_cfg.scenes_per_phase = 2;
  EngineBackends http_engine{&hq, &hs, &hj, nullptr};
  const auto http_metrics =
      run_iteration(http_run, http_engine, image_pool, http_cfg);
  CHECK(http_metrics.kl_estimate == "omitted");

  server.stop();
  listener.join();

  // sim run
  SimWorldFixture world(321, 24);
  RunDir sim_run(fresh_dir("coevo_schema_sim"));
  sim_run.initialize({});
  run_iteration(sim_run, world.engine(), world.pool, sim_cfg(321));

  // both traces expose the same contract keys
  const std::set<std::string> question_keys = {"scene", "raw_text", "valid",
                                               "reward", "advantage"};
  const std::set<std::string> batch_keys = {"prompt", "completion", "reward",
                                            "advantage"};
  for (const auto& root : {http_run.root(), sim_run.root()}) {
    const auto questions = read_jsonl(root / "iter_0" / "questions.jsonl");
    REQUIRE_FALSE(questions.empty());
    for (const auto& key : question_keys) CHECK(questions[0].contains(key));
    const auto batches = read_jsonl(root / "iter_0" / "batches.jsonl");
    REQUIRE_FALSE(batches.empty());
    for (const auto& key : batch_keys) CHECK(batches[0].contains(key));
    const auto dataset = read_jsonl(root / "iter_0" / "dataset.jsonl");
    REQUIRE_FALSE(dataset.empty());
    for (const char* key :
         {"scene", "question", "pseudo_label", "difficulty", "iteration"})
      CHECK(dataset[0].contains(key));
  }
}

TEST_CASE("evaluate_questioner leaves the live backends untouched") {
  SimWorldFixture world(55, 24);
  const auto eval_scenes = sim::make_scenes(55, "eval", 16);
  LoopConfig cfg = sim_cfg(55);

  const auto before = world.questioner.policy().logits;
  const auto m1 = evaluate_questioner(world.questioner, world.solver,
                                      &world.judge, eval_scenes, cfg);
  const auto m2 = evaluate_questioner(world.questioner, world.solver,
                                      &world.judge, eval_scenes, cfg);
  CHECK(world.questioner.policy().logits == before);
  CHECK(m1.validity_rate == m2.validity_rate);
  CHECK(m1.mean_reward == m2.mean_reward);
  REQUIRE(m1.mean_judged_difficulty.has_value());
  CHECK(*m1.mean_judged_difficulty == *m2.mean_judged_difficulty);
}

TEST_CASE("slice_scene_pool cycles deterministically") {
  const auto pool = sim::make_scenes(1, "slice", 5);
  const auto s0 = slice_scene_pool(pool, 0, 3);
  const auto s1 = slice_scene_pool(pool, 1, 3);
  REQUIRE(s0.size() == 3);
  CHECK(s0[0].id == pool[0].id);
  CHECK(s1[0].id == pool[3].id);
  CHECK(s1[2].id == pool[0].id);  // wraps
}
