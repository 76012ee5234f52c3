#pragma once

#include <string>

#include "coevo/backend.hpp"

namespace coevo {

struct HttpBackendOptions {
  std::string endpoint;  // e.g. http://localhost:8000
  std::string model;
  std::string api_key;        // empty: no Authorization header
  int timeout_ms = 120000;
  int max_retries = 3;        // extra attempts on transport errors / 5xx
  int retry_backoff_ms = 250; // doubles per attempt

  // Fills endpoint / api_key / timeout from COEVO_ENDPOINT, COEVO_API_KEY and
  // COEVO_TIMEOUT_MS where the fields are still unset.
  void apply_environment();
};

// Chat-completions client against an OpenAI-compatible server. Scenes must be
// image paths (sent as base64 data URLs) or http(s) URLs.
class HttpBackend final : public PolicyBackend {
 public:
  explicit HttpBackend(HttpBackendOptions options);

  std::string kind() const override { return "http"; }
  bool returns_logprobs() const override { return false; }
  std::vector<Generation> generate(const GenerateRequest& request) override;
  std::unique_ptr<PolicyBackend> snapshot() const override;

  const HttpBackendOptions& options() const { return options_; }

  // Exposed for tests: the exact request body sent on the wire.
  nlohmann::json build_body(const GenerateRequest& request) const;

 private:
  HttpBackendOptions options_;
  std::string host_;  // scheme://host:port
  std::string path_;  // base path + /v1/chat/completions
};

std::string base64_encode(const std::string& bytes);

}  // namespace coevo
