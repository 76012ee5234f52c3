#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coevo/backend.hpp"
#include "coevo/types.hpp"

namespace coevo {

// Fraction of raw Questioner outputs that satisfy the output grammar.
// The list must be non-empty.
double validity_rate(const std::vector<std::string>& raw_outputs);

// Difficulty bands: Simple 0.0-0.3, Medium 0.4-0.7, Hard 0.8-1.0. Scores in
// the uncovered gaps bin to the nearest band, ties to the lower one.
enum class DifficultyBand { simple = 0, medium = 1, hard = 2 };
DifficultyBand difficulty_band(double score);

// Asks the judge backend to score one question in [0, 1]. A non-numeric or
// out-of-range reply is retried once, then reported missing.
std::optional<double> judge_difficulty(const McqQuestion& question,
                                       const SceneRef& scene,
                                       PolicyBackend& judge);

struct DifficultyReport {
  double mean = 0.0;                       // over scored questions
  std::array<int, 3> band_counts = {0, 0, 0};
  int n = 0;        // valid questions in the corpus
  int invalid = 0;  // corpus rows whose raw text failed the grammar
  int missing = 0;  // judge failures among valid questions
  std::string rubric_note;

  nlohmann::json to_json() const;
  std::string to_table() const;  // plain-text "Valid Rate / Difficulty" table
};

// Reads a questions.jsonl corpus ({"scene": ..., "raw_text": ...} rows),
// judges every valid question, and aggregates mean + band histogram.
DifficultyReport difficulty_report(const std::filesystem::path& corpus,
                                   PolicyBackend& judge);

// Same aggregation over in-memory (question, scene) pairs.
DifficultyReport difficulty_report_for(
    const std::vector<std::pair<McqQuestion, SceneRef>>& questions,
    PolicyBackend& judge, int invalid_count = 0);

}  // namespace coevo
