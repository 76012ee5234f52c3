#include "coevo/serialize.hpp"

namespace coevo {

using nlohmann::json;

OptionLabel label_from_json(const json& j) {
  const auto s = j.get<std::string>();
  if (s.size() == 1) {
    if (auto label = label_from_char(s[0])) return *label;
  }
  throw ConfigError("not an option label: '" + s + "'");
}

json to_json(const SceneRef& scene) {
  json j{{"id", scene.id}};
  if (scene.is_image()) {
    j["image"] = scene.image().path;
  } else {
    const auto& sim = scene.sim();
    j["sim"] = {{"kind", sim.kind},
                {"shapes", sim.shapes},
                {"attributes", sim.attributes}};
  }
  return j;
}

SceneRef scene_from_json(const json& j) {
  SceneRef scene;
  scene.id = j.at("id").get<std::string>();
  if (j.contains("image")) {
    scene.source = ImagePath{j.at("image").get<std::string>()};
  } else if (j.contains("sim")) {
    const auto& s = j.at("sim");
    SimSceneSpec spec;
    spec.kind = s.at("kind").get<std::string>();
    spec.shapes = s.at("shapes").get<std::vector<std::string>>();
    spec.attributes = s.at("attributes").get<std::map<std::string, double>>();
    scene.source = std::move(spec);
  } else {
    throw ConfigError("scene '" + scene.id + "' has neither image nor sim");
  }
  return scene;
}

json to_json(const McqQuestion& question) {
  return {{"stem", question.stem},
          {"options", std::vector<std::string>(question.options.begin(),
                                               question.options.end())}};
}

McqQuestion mcq_from_json(const json& j) {
  McqQuestion q;
  q.stem = j.at("stem").get<std::string>();
  const auto opts = j.at("options").get<std::vector<std::string>>();
  if (opts.size() != 4) throw ConfigError("question must carry 4 options");
  std::copy(opts.begin(), opts.end(), q.options.begin());
  return q;
}

json to_json(const VoteResult& vote) {
  std::vector<std::string> votes;
  votes.reserve(vote.votes.size());
  for (OptionLabel v : vote.votes) votes.push_back(to_string(v));
  return {{"pseudo_label", to_string(vote.pseudo_label)},
          {"confidence", vote.confidence},
          {"votes", votes},
          {"m_requested", vote.m_requested},
          {"tie_broken", vote.tie_broken}};
}

VoteResult vote_from_json(const json& j) {
  VoteResult vote;
  vote.pseudo_label = label_from_json(j.at("pseudo_label"));
  vote.confidence = j.at("confidence").get<double>();
  for (const auto& v : j.at("votes")) vote.votes.push_back(label_from_json(v));
  vote.m_requested = j.at("m_requested").get<int>();
  vote.tie_broken = j.at("tie_broken").get<bool>();
  return vote;
}

json to_json(const TrainingSample& sample) {
  std::vector<std::string> votes;
  votes.reserve(sample.votes.size());
  for (OptionLabel v : sample.votes) votes.push_back(to_string(v));
  return {{"scene", to_json(sample.scene)},
          {"question", to_json(sample.question)},
          {"pseudo_label", to_string(sample.pseudo_label)},
          {"difficulty", sample.difficulty},
          {"iteration", sample.iteration},
          {"votes", votes}};
}

TrainingSample sample_from_json(const json& j) {
  TrainingSample sample;
  sample.scene = scene_from_json(j.at("scene"));
  sample.question = mcq_from_json(j.at("question"));
  sample.pseudo_label = label_from_json(j.at("pseudo_label"));
  sample.difficulty = j.at("difficulty").get<double>();
  sample.iteration = j.at("iteration").get<int>();
  if (j.contains("votes"))
    for (const auto& v : j.at("votes"))
      sample.votes.push_back(label_from_json(v));
  return sample;
}

json to_json(const GroupRollout& group) {
  json completions = json::array();
  for (const auto& c : group.completions) {
    json jc{{"text", c.text},
            {"log_prob_current", c.log_prob_current},
            {"log_prob_old", c.log_prob_old}};
    if (!c.action_id.empty()) jc["action_id"] = c.action_id;
    completions.push_back(std::move(jc));
  }
  return {{"scene_id", group.scene_id},
          {"prompt", group.prompt},
          {"completions", completions},
          {"rewards", group.rewards},
          {"advantages", group.advantages}};
}

GroupRollout group_from_json(const json& j) {
  GroupRollout group;
  group.scene_id = j.value("scene_id", "");
  group.prompt = j.value("prompt", "");
  for (const auto& jc : j.at("completions")) {
    Completion c;
    c.text = jc.at("text").get<std::string>();
    c.log_prob_current = jc.at("log_prob_current").get<double>();
    c.log_prob_old = jc.at("log_prob_old").get<double>();
    c.action_id = jc.value("action_id", "");
    group.completions.push_back(std::move(c));
  }
  group.rewards = j.at("rewards").get<std::vector<double>>();
  group.advantages = j.at("advantages").get<std::vector<double>>();
  return group;
}

json to_json(const LoopConfig& cfg) {
  return {{"m", cfg.m},
          {"g_questioner", cfg.g_questioner},
          {"g_solver", cfg.g_solver},
          {"temperature", cfg.temperature},
          {"clip_epsilon", cfg.clip_epsilon},
          {"kl_beta", cfg.kl_beta},
          {"norm_epsilon", cfg.norm_epsilon},
          {"filter_low", cfg.filter_low},
          {"filter_high", cfg.filter_high},
          {"learning_rate", cfg.learning_rate},
          {"seed", cfg.seed},
          {"scenes_per_phase", cfg.scenes_per_phase},
          {"redraw_budget", cfg.redraw_budget},
          {"questioner_epochs", cfg.questioner_epochs},
          {"solver_epochs", cfg.solver_epochs},
          {"feedback_solver",
           cfg.feedback_solver == FeedbackSolverMode::base ? "base"
                                                           : "previous"}};
}

LoopConfig loop_config_from_json(const json& j) {
  LoopConfig cfg;
  cfg.m = j.value("m", cfg.m);
  cfg.g_questioner = j.value("g_questioner", cfg.g_questioner);
  cfg.g_solver = j.value("g_solver", cfg.g_solver);
  cfg.temperature = j.value("temperature", cfg.temperature);
  cfg.clip_epsilon = j.value("clip_epsilon", cfg.clip_epsilon);
  cfg.kl_beta = j.value("kl_beta", cfg.kl_beta);
  cfg.norm_epsilon = j.value("norm_epsilon", cfg.norm_epsilon);
  cfg.filter_low = j.value("filter_low", cfg.filter_low);
  cfg.filter_high = j.value("filter_high", cfg.filter_high);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.scenes_per_phase = j.value("scenes_per_phase", cfg.scenes_per_phase);
  cfg.redraw_budget = j.value("redraw_budget", cfg.redraw_budget);
  cfg.questioner_epochs = j.value("questioner_epochs", cfg.questioner_epochs);
  cfg.solver_epochs = j.value("solver_epochs", cfg.solver_epochs);
  if (j.contains("feedback_solver")) {
    const auto mode = j.at("feedback_solver").get<std::string>();
    if (mode == "base") {
      cfg.feedback_solver = FeedbackSolverMode::base;
    } else if (mode == "previous") {
      cfg.feedback_solver = FeedbackSolverMode::previous;
    } else {
      throw ConfigError("feedback_solver must be 'previous' or 'base', got '" +
                        mode + "'");
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace coevo
