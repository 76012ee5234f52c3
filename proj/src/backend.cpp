#include "coevo/backend.hpp"

#include "coevo/serialize.hpp"

namespace coevo {

RequestLog::RequestLog(const std::filesystem::path& path) : path_(path) {
  std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::app);
  if (!out_) throw Error("cannot open request log " + path.string());
}

void RequestLog::record(nlohmann::json entry) {
  std::lock_guard lock(mutex_);
  entry["seq"] = seq_++;
  out_ << entry.dump() << "\n";
  out_.flush();
}

void PolicyBackend::log_request(const GenerateRequest& request,
                                nlohmann::json extra) {
  if (!request_log_) return;
  nlohmann::json entry{{"purpose", request.purpose},
                       {"backend", kind()},
                       {"scene_id", request.scene.id},
                       {"n", request.n},
                       {"temperature", request.temperature}};
  if (!extra.is_null()) entry.update(extra);
  request_log_->record(std::move(entry));
}

}  // namespace coevo
