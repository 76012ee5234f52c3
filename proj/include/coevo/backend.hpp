#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "coevo/types.hpp"

namespace coevo {

struct GenerateRequest {
  std::string system;
  std::string user;
  SceneRef scene;
  double temperature = 1.0;
  int n = 1;
  std::string purpose;  // tag for the request log, e.g. "solver_vote"
};

// One completion from a backend. Desk-scale backends also report the sampled
// action and its log-probability so GRPO updates can recompute ratios; text
// backends leave both unset.
struct Generation {
  std::string text;
  std::optional<double> log_prob;
  std::string action_id;
};

// Append-only JSONL log shared by all backends of a run; one line per
// generate call (http backends add transport detail).
class RequestLog {
 public:
  explicit RequestLog(const std::filesystem::path& path);

  void record(nlohmann::json entry);
  std::filesystem::path path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::mutex mutex_;
  std::uint64_t seq_ = 0;
};

// Uniform generation interface over inference servers and the simulator.
// Every implementation returns exactly request.n completions or throws.
class PolicyBackend {
 public:
  virtual ~PolicyBackend() = default;

  virtual std::string kind() const = 0;  // "http" | "simulated"
  virtual bool returns_logprobs() const = 0;
  virtual std::vector<Generation> generate(const GenerateRequest& request) = 0;

  // Desk-scale backends own a trainable policy and apply GRPO updates
  // in-place; text backends only export batches.
  virtual bool trainable() const { return false; }
  virtual void apply_grpo_update(std::span<const GroupRollout> groups,
                                 const LoopConfig& cfg) {
    (void)groups;
    (void)cfg;
  }

  // A frozen copy for use as the feedback solver. For http backends this is
  // a handle to the same endpoint (remote weights cannot be frozen here).
  virtual std::unique_ptr<PolicyBackend> snapshot() const = 0;

  void set_request_log(RequestLog* log) { request_log_ = log; }

 protected:
  void log_request(const GenerateRequest& request, nlohmann::json extra = {});

  RequestLog* request_log_ = nullptr;
};

}  // namespace coevo
