#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ivsg/model/model.hpp"
#include "ivsg/pipeline/pipeline.hpp"
#include "ivsg/synth/generator.hpp"

namespace ivsg::service {

inline constexpr const char* kApiVersion = "1";

/// An error with its HTTP status and a machine-readable code.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message, std::string path = {})
      : std::runtime_error(message), status_(status), code_(std::move(code)), path_(std::move(path)) {}
  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }
  const std::string& path() const noexcept { return path_; }
  nlohmann::json to_json() const;

 private:
  int status_;
  std::string code_;
  std::string path_;
};

struct ServiceConfig {
  std::size_t max_sessions = 16;
  std::chrono::seconds idle_timeout{900};
  pipeline::PipelineConfig pipeline;
  std::function<std::chrono::steady_clock::time_point()> clock;  // defaults to steady_clock::now
  std::function<void(const std::string& session_id)> on_run_start;  // test hook, called while busy
};

/// Sessions over one shared read-only model. Thread-safe; prompts on one
/// session are serialized by a busy flag (a concurrent prompt is a conflict,
/// not a wait).
class SessionManager {
 public:
  SessionManager(std::shared_ptr<const model::Model> model, ServiceConfig config);
  ~SessionManager();

  /// Body: {"synthetic": {scene fields}} or {"document": interchange JSON}
  /// together with raw frames (`frames` argument, IVFR container bytes).
  std::string create_session(const nlohmann::json& request, const std::string& frames = {});
  std::string create_session(synth::AnnotatedClip clip);

  nlohmann::json describe(const std::string& id);
  nlohmann::json submit_prompt(const std::string& id, const nlohmann::json& prompt);
  nlohmann::json graph(const std::string& id);
  nlohmann::json overlays(const std::string& id, int frame);
  /// PNG bytes of one frame.
  std::string frame_png(const std::string& id, int frame);
  void remove(const std::string& id);

  std::size_t size();
  const model::Model& model() const { return *model_; }

 private:
  struct Session;
  std::shared_ptr<Session> acquire(const std::string& id);
  std::chrono::steady_clock::time_point now() const;
  void expire_locked();

  std::shared_ptr<const model::Model> model_;
  ServiceConfig config_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::set<std::string> gone_;
  std::uint64_t counter_ = 0;
};

/// Scene fields accepted under "synthetic"; unknown keys are rejected.
synth::SceneConfig scene_from_json(const nlohmann::json& j);

/// Encodes an image (values in [0,1], 1 or 3 channels) as an 8-bit PNG.
std::string encode_png(const Image& image);

class HttpServer {
 public:
  explicit HttpServer(SessionManager& manager);
  ~HttpServer();
  /// Binds; port 0 picks a free port. Returns the bound port or throws IoError.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ivsg::service
