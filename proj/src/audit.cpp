#include "coevo/audit.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "coevo/parse.hpp"
#include "coevo/prompts.hpp"
#include "coevo/serialize.hpp"

namespace coevo {
namespace {

// The rubric's prose variant ("0.1-0.4 Simple, 0.7-1.0 Hard") disagrees with
// the band table used here; the report carries this note so consumers see the
// binning that was applied.
constexpr const char* kRubricNote =
    "bands: simple 0.0-0.3, medium 0.4-0.7, hard 0.8-1.0; gap scores bin to "
    "the nearest band (ties low); the judge prompt's own rubric text differs "
    "(0.1-0.4 simple, 0.7-1.0 hard)";

std::optional<double> parse_score(const std::string& reply) {
  std::istringstream in(reply);
  double value = 0.0;
  in >> value;
  if (in.fail()) return std::nullopt;
  std::string rest;
  in >> rest;
  if (!rest.empty()) return std::nullopt;  // anything after the number rejects
  if (value < 0.0 || value > 1.0) return std::nullopt;
  return value;
}

}  // namespace

double validity_rate(const std::vector<std::string>& raw_outputs) {
  if (raw_outputs.empty())
    throw ContractViolation("validity_rate: empty corpus");
  std::size_t valid = 0;
  for (const auto& raw : raw_outputs)
    if (parse_questioner(raw).valid) ++valid;
  return static_cast<double>(valid) / static_cast<double>(raw_outputs.size());
}

DifficultyBand difficulty_band(double score) {
  if (score <= 0.35) return DifficultyBand::simple;
  if (score <= 0.75) return DifficultyBand::medium;
  return DifficultyBand::hard;
}

std::optional<double> judge_difficulty(const McqQuestion& question,
                                       const SceneRef& scene,
                                       PolicyBackend& judge) {
  GenerateRequest req;
  req.system = prompts::kJudgeSystem;
  req.user = prompts::judge_user(question);
  req.scene = scene;
  req.temperature = 0.0;
  req.n = 1;
  req.purpose = "judge";

  for (int attempt = 0; attempt < 2; ++attempt) {
    std::vector<Generation> out;
    try {
      out = judge.generate(req);
    } catch (const Error&) {
      continue;
    }
    if (out.empty()) continue;
    if (auto score = parse_score(out.front().text)) return score;
  }
  return std::nullopt;
}

nlohmann::json DifficultyReport::to_json() const {
  return {{"mean", mean},
          {"bands",
           {{"simple", band_counts[0]},
            {"medium", band_counts[1]},
            {"hard", band_counts[2]}}},
          {"n", n},
          {"invalid", invalid},
          {"missing", missing},
          {"rubric_note", rubric_note}};
}

std::string DifficultyReport::to_table() const {
  const int total = n + invalid;
  const double valid_rate =
      total > 0 ? static_cast<double>(n) / total : 0.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "%-12s %-12s %s\n%-12s %6.1f%%     %.2f\n", "corpus",
                "Valid Rate", "Difficulty", "questions", 100.0 * valid_rate,
                mean);
  std::string out(buf);
  std::snprintf(buf, sizeof(buf),
                "bands: simple=%d medium=%d hard=%d (missing=%d)\n",
                band_counts[0], band_counts[1], band_counts[2], missing);
  return out + buf;
}

DifficultyReport difficulty_report_for(
    const std::vector<std::pair<McqQuestion, SceneRef>>& questions,
    PolicyBackend& judge, int invalid_count) {
  DifficultyReport report;
  report.rubric_note = kRubricNote;
  report.invalid = invalid_count;
  report.n = static_cast<int>(questions.size());
  double total = 0.0;
  int scored = 0;
  for (const auto& [question, scene] : questions) {
    const auto score = judge_difficulty(question, scene, judge);
    if (!score) {
      report.missing += 1;
      continue;
    }
    total += *score;
    scored += 1;
    report.band_counts[static_cast<std::size_t>(difficulty_band(*score))] += 1;
  }
  report.mean = scored > 0 ? total / scored : 0.0;
  return report;
}

DifficultyReport difficulty_report(const std::filesystem::path& corpus,
                                   PolicyBackend& judge) {
  std::ifstream in(corpus);
  if (!in) throw Error("cannot open corpus: " + corpus.string());

  std::vector<std::pair<McqQuestion, SceneRef>> questions;
  int invalid = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(corpus.string() + ":" + std::to_string(line_no) + ": " +
                  e.what());
    }
    const auto parsed = parse_questioner(row.at("raw_text").get<std::string>());
    if (!parsed.valid) {
      ++invalid;
      continue;
    }
    questions.emplace_back(*parsed.question, scene_from_json(row.at("scene")));
  }
  return difficulty_report_for(questions, judge, invalid);
}

}  // namespace coevo
