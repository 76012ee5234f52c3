#include "coevo/http_backend.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

namespace coevo {
namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

std::string mime_for(const std::string& path) {
  const auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (auto& c : ext) c = static_cast<char>(std::tolower(c));
  if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
  if (ext == "gif") return "image/gif";
  if (ext == "webp") return "image/webp";
  if (ext == "bmp") return "image/bmp";
  return "image/png";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TransportError("cannot read image file: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_url(const std::string& s) {
  return s.starts_with("http://") || s.starts_with("https://");
}

}  // namespace

std::string base64_encode(const std::string& bytes) {
  static constexpr char kTable[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= bytes.size()) {
    const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                            static_cast<unsigned char>(bytes[i + 2]);
    out += kTable[(v >> 18) & 63];
    out += kTable[(v >> 12) & 63];
    out += kTable[(v >> 6) & 63];
    out += kTable[v & 63];
    i += 3;
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
    out += kTable[(v >> 18) & 63];
    out += kTable[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out += kTable[(v >> 18) & 63];
    out += kTable[(v >> 12) & 63];
    out += kTable[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

void HttpBackendOptions::apply_environment() {
  if (endpoint.empty()) endpoint = env_or("COEVO_ENDPOINT", "");
  if (api_key.empty()) api_key = env_or("COEVO_API_KEY", "");
  const auto t = env_or("COEVO_TIMEOUT_MS", "");
  if (!t.empty()) timeout_ms = std::stoi(t);
}

HttpBackend::HttpBackend(HttpBackendOptions options)
    : options_(std::move(options)) {
  if (options_.endpoint.empty())
    throw ConfigError("http backend: endpoint not configured");
  // Split a possible base path off the endpoint; httplib wants scheme://host.
  std::string ep = options_.endpoint;
  const auto scheme_end = ep.find("://");
  if (scheme_end == std::string::npos)
    throw ConfigError("http backend: endpoint must carry a scheme: " + ep);
  const auto path_start = ep.find('/', scheme_end + 3);
  std::string base_path;
  if (path_start != std::string::npos) {
    base_path = ep.substr(path_start);
    ep = ep.substr(0, path_start);
  }
  while (base_path.size() > 1 && base_path.back() == '/') base_path.pop_back();
  if (base_path == "/") base_path.clear();
  host_ = ep;
  path_ = base_path + "/v1/chat/completions";
}

nlohmann::json HttpBackend::build_body(const GenerateRequest& request) const {
  nlohmann::json image_part;
  if (!request.scene.is_image())
    throw ConfigError("http backend: scene '" + request.scene.id +
                      "' is not an image");
  const std::string& path = request.scene.image().path;
  if (is_url(path)) {
    image_part = {{"type", "image_url"}, {"image_url", {{"url", path}}}};
  } else {
    const std::string data = read_file(path);
    image_part = {{"type", "image_url"},
                  {"image_url",
                   {{"url", "data:" + mime_for(path) + ";base64," +
                                base64_encode(data)}}}};
  }

  return {{"model", options_.model},
          {"messages",
           {{{"role", "system"}, {"content", request.system}},
            {{"role", "user"},
             {"content",
              {{{"type", "text"}, {"text", request.user}}, image_part}}}}},
          {"temperature", request.temperature},
          {"n", request.n}};
}

std::vector<Generation> HttpBackend::generate(const GenerateRequest& request) {
  const nlohmann::json body = build_body(request);
  const std::string payload = body.dump();

  httplib::Client client(host_);
  client.set_connection_timeout(options_.timeout_ms / 1000,
                                (options_.timeout_ms % 1000) * 1000);
  client.set_read_timeout(options_.timeout_ms / 1000,
                          (options_.timeout_ms % 1000) * 1000);
  httplib::Headers headers;
  if (!options_.api_key.empty())
    headers.emplace("Authorization", "Bearer " + options_.api_key);

  int attempts = 0;
  int status = -1;
  std::string response_body;
  std::string last_error;
  for (int i = 0; i <= options_.max_retries; ++i) {
    if (i > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(options_.retry_backoff_ms << (i - 1)));
    }
    ++attempts;
    auto res = client.Post(path_, headers, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;  // connection-level failure: retry
    }
    status = res->status;
    response_body = res->body;
    if (status >= 500) continue;  // server-side failure: retry
    break;
  }

  log_request(request, {{"endpoint", options_.endpoint},
                        {"model", options_.model},
                        {"status", status},
                        {"attempts", attempts},
                        {"request", body},
                        {"response", response_body}});

  if (status < 0)
    throw TransportError("POST " + host_ + path_ + " failed after " +
                         std::to_string(attempts) + " attempts: " + last_error);
  if (status < 200 || status >= 300)
    throw TransportError("POST " + host_ + path_ + " returned " +
                         std::to_string(status) + ": " + response_body);

  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(response_body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError("unparseable completion response: " +
                        std::string(e.what()));
  }
  if (!parsed.contains("choices") || !parsed["choices"].is_array())
    throw ProtocolError("completion response carries no choices array");
  const auto& choices = parsed["choices"];
  if (choices.size() < static_cast<std::size_t>(request.n))
    throw ProtocolError("asked for " + std::to_string(request.n) +
                        " completions, got " + std::to_string(choices.size()));

  std::vector<Generation> out;
  out.reserve(static_cast<std::size_t>(request.n));
  for (int i = 0; i < request.n; ++i) {
    const auto& choice = choices[static_cast<std::size_t>(i)];
    Generation g;
    g.text = choice.at("message").at("content").get<std::string>();
    out.push_back(std::move(g));
  }
  return out;
}

std::unique_ptr<PolicyBackend> HttpBackend::snapshot() const {
  // Remote weights cannot be frozen from here; the snapshot is a handle to
  // the same endpoint.
  return std::make_unique<HttpBackend>(options_);
}

}  // namespace coevo
