#pragma once

// HTTP session API. JSON bodies; masks travel as RLE envelopes (io/rle.hpp),
// volumes are uploaded as multipart/form-data with a "sidecar" part (the
// native JSON sidecar) and a "payload" part (raw little-endian float32).
//
//   GET    /health
//   POST   /volumes                                  201 {volume_id, shape, spacing}
//   GET    /volumes/{vid}                            sidecar
//   GET    /volumes/{vid}/slices/{d}                 image/bmp, 8-bit gray
//   POST   /sessions {volume_id, model_id?}          201 session handle
//   GET    /sessions/{sid}                           session handle
//   DELETE /sessions/{sid}                           204
//   POST   /sessions/{sid}/lesions                   201 {lesion_id, revision}
//   POST   /sessions/{sid}/lesions/{lid}/clicks {x, y, slice, label}
//                                                    {slice, mask, revision, empty_after_positive}
//   POST   /sessions/{sid}/lesions/{lid}/propagate   {mask, revision}
//   POST   /sessions/{sid}/propagate-exemplars       {mask, revision}
//   GET    /sessions/{sid}/exemplars                 {revision, entries}
//   GET    /sessions/{sid}/mask?kind=instance|semantic|final[&lesion=lid]
//
// Mutating bodies may carry "revision"; a value other than the session's
// current revision is rejected with 409. Errors are {"error": message} with
// 400 (bad input), 404 (unknown id), 409 (conflict), 503 (session limit).

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include <json.hpp>

#include "mois/inference/session.hpp"

namespace mois::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string model_path;
  std::string model_id = "default";
  double session_ttl_s = 3600.0;  // idle time before a session is dropped; <= 0 disables
  int max_sessions = 64;
  std::string snapshot_dir;  // empty: nothing persisted
  int threads = 4;
  inference::InferenceConfig inference;

  void validate() const;
  // Every key can be overridden by MOIS_<KEY> (upper case), inference keys included,
  // e.g. MOIS_PORT, MOIS_SNAPSHOT_DIR, MOIS_V_THRESH.
  void apply_env(const std::function<const char*(const char*)>& getenv = [](const char* k) { return std::getenv(k); });
};

void to_json(nlohmann::json& j, const ServiceConfig& c);
void from_json(const nlohmann::json& j, ServiceConfig& c);
ServiceConfig load_service_config(const std::filesystem::path& path);

class Server {
 public:
  // Loads the model from config.model_path unless one is given.
  explicit Server(ServiceConfig config, std::shared_ptr<const inference::Net> net = nullptr);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  int start();
  // Binds and serves on the calling thread until stop().
  void run();
  void stop();
  int port() const;

  const ServiceConfig& config() const;
  size_t session_count() const;
  size_t volume_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mois::service
