#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace coevo {

// Error hierarchy. ContractViolation marks caller bugs (broken preconditions),
// the rest are runtime conditions callers may want to catch individually.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Raised when every Solver sample in a vote was unparseable.
class NoReasoningSignal : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// The four MCQ option labels. Ordering A < B < C < D is relied on by the
// deterministic vote tie-break.
enum class OptionLabel : std::uint8_t { A = 0, B = 1, C = 2, D = 3 };

inline constexpr std::array<OptionLabel, 4> kAllLabels = {
    OptionLabel::A, OptionLabel::B, OptionLabel::C, OptionLabel::D};

inline char to_char(OptionLabel label) {
  return static_cast<char>('A' + static_cast<int>(label));
}

inline std::optional<OptionLabel> label_from_char(char c) {
  if (c >= 'A' && c <= 'D') return static_cast<OptionLabel>(c - 'A');
  return std::nullopt;
}

inline std::string to_string(OptionLabel label) { return {to_char(label)}; }

// Descriptor of a synthetic scene: what is drawn plus named measurements.
// Everything downstream (questions, answers) derives deterministically from it.
struct SimSceneSpec {
  std::string kind;  // geometry | chart | spatial
  std::vector<std::string> shapes;
  std::map<std::string, double> attributes;

  bool operator==(const SimSceneSpec&) const = default;
};

struct ImagePath {
  std::string path;

  bool operator==(const ImagePath&) const = default;
};

using SceneSource = std::variant<ImagePath, SimSceneSpec>;

// Reference to one unlabeled input: either an image on disk (or URL) or a
// simulated scene. The sole external input of the whole loop.
struct SceneRef {
  std::string id;
  SceneSource source;

  bool is_image() const { return std::holds_alternative<ImagePath>(source); }
  bool is_sim() const { return std::holds_alternative<SimSceneSpec>(source); }
  const ImagePath& image() const { return std::get<ImagePath>(source); }
  const SimSceneSpec& sim() const { return std::get<SimSceneSpec>(source); }

  bool operator==(const SceneRef&) const = default;
};

// A four-option multiple-choice question. The fixed-size array pins the
// exactly-four / one-per-label invariant structurally.
struct McqQuestion {
  std::string stem;
  std::array<std::string, 4> options;

  const std::string& option(OptionLabel label) const {
    return options[static_cast<std::size_t>(label)];
  }
  std::string& option(OptionLabel label) {
    return options[static_cast<std::size_t>(label)];
  }

  bool operator==(const McqQuestion&) const = default;
};

// Parsed Questioner generation: description, question and intuitive answer.
// `valid` is true iff question and intuitive_answer are both present, which in
// turn requires the raw text to have satisfied the tag grammar.
struct QuestionerOutput {
  std::string description;
  std::optional<McqQuestion> question;
  std::optional<OptionLabel> intuitive_answer;
  bool valid = false;
  std::string raw_text;
};

// Majority-vote outcome over m Solver samples. `votes` holds only the votes
// that parsed; abstentions are implicit in m_requested - votes.size().
struct VoteResult {
  OptionLabel pseudo_label = OptionLabel::A;
  double confidence = 0.0;  // count(pseudo_label) / m_requested
  std::vector<OptionLabel> votes;
  int m_requested = 0;
  bool tie_broken = false;
};

// One record of the difficulty-filtered training set.
struct TrainingSample {
  SceneRef scene;
  McqQuestion question;
  OptionLabel pseudo_label = OptionLabel::A;
  double difficulty = 0.0;  // the vote confidence s
  int iteration = 0;
  std::vector<OptionLabel> votes;  // raw vote multiset, kept for the trace
};

// One sampled completion inside a group. `action_id` is filled by desk-scale
// backends that expose their discrete action (needed to recompute log-probs
// during policy updates); text backends leave it empty.
struct Completion {
  std::string text;
  double log_prob_current = 0.0;
  double log_prob_old = 0.0;
  std::string action_id;
};

// A group of G completions for one prompt with rewards and z-scored
// advantages. All three vectors have length G.
struct GroupRollout {
  std::string scene_id;
  std::string prompt;
  std::vector<Completion> completions;
  std::vector<double> rewards;
  std::vector<double> advantages;

  std::size_t size() const { return completions.size(); }
};

enum class FeedbackSolverMode {
  previous,  // freeze the solver as it stood at the start of the iteration
  base,      // freeze the solver as it stood at the start of the run
};

// All loop hyperparameters. Defaults follow the reference training setup;
// learning_rate applies only to the built-in softmax policy.
struct LoopConfig {
  int m = 10;                  // majority-vote sample size
  int g_questioner = 4;        // group size, Questioner phase
  int g_solver = 5;            // group size, Solver phase
  double temperature = 1.0;    // sampling temperature, all phases
  double clip_epsilon = 0.2;   // surrogate clip range
  double kl_beta = 0.01;       // KL penalty coefficient
  double norm_epsilon = 1e-6;  // z-score denominator guard
  double filter_low = 0.3;     // difficulty window, inclusive
  double filter_high = 0.8;
  double learning_rate = 1e-6;

  // Engine knobs beyond the core hyperparameters.
  std::uint64_t seed = 0;
  int scenes_per_phase = 64;
  int redraw_budget = 3;  // extra question draws per scene in build_dataset
  int questioner_epochs = 1;
  int solver_epochs = 2;
  FeedbackSolverMode feedback_solver = FeedbackSolverMode::previous;

  void validate() const {
    if (m < 1) throw ConfigError("m must be >= 1");
    if (g_questioner < 2) throw ConfigError("g_questioner must be >= 2");
    if (g_solver < 2) throw ConfigError("g_solver must be >= 2");
    if (temperature < 0.0) throw ConfigError("temperature must be >= 0");
    if (clip_epsilon <= 0.0) throw ConfigError("clip_epsilon must be > 0");
    if (norm_epsilon <= 0.0) throw ConfigError("norm_epsilon must be > 0");
    if (filter_low < 0.0 || filter_high > 1.0 || filter_low > filter_high)
      throw ConfigError("filter window must satisfy 0 <= low <= high <= 1");
    if (scenes_per_phase < 1) throw ConfigError("scenes_per_phase must be >= 1");
    if (redraw_budget < 0) throw ConfigError("redraw_budget must be >= 0");
    if (questioner_epochs < 1 || solver_epochs < 1)
      throw ConfigError("epoch counts must be >= 1");
  }
};

}  // namespace coevo
