#include "ivsg/service/service.hpp"

#include <atomic>
#include <random>
#include <sstream>

#include "ivsg/core/error.hpp"
#include "ivsg/core/interchange.hpp"
#include "ivsg/synth/dataset.hpp"

namespace ivsg::service {

nlohmann::json ServiceError::to_json() const {
  nlohmann::json e{{"code", code_}, {"message", what()}};
  if (!path_.empty()) e["path"] = path_;
  return {{"error", e}};
}

struct SessionManager::Session {
  std::string id;
  synth::AnnotatedClip clip;
  std::unique_ptr<model::BackboneSession> backbone;
  std::vector<pipeline::PipelineResult> outputs;
  std::mutex outputs_mutex;
  std::chrono::steady_clock::time_point created, last_used;
  std::atomic<bool> busy{false};
};

namespace {

ServiceError unprocessable(const std::string& message, const std::string& path = {}) {
  return ServiceError(422, "invalid", message, path);
}

template <class T>
void read_field(const nlohmann::json& j, const std::string& key, T& out) {
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw unprocessable("wrong type for '" + key + "'", "synthetic." + key);
  }
}

}  // namespace

synth::SceneConfig scene_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw unprocessable("scene config must be an object", "synthetic");
  synth::SceneConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "seed") read_field(j, key, c.seed);
    else if (key == "frames") read_field(j, key, c.frames);
    else if (key == "height") read_field(j, key, c.height);
    else if (key == "width") read_field(j, key, c.width);
    else if (key == "num_entities") read_field(j, key, c.num_entities);
    else if (key == "object_class_count") read_field(j, key, c.object_class_count);
    else if (key == "max_interactions_per_subject") read_field(j, key, c.max_interactions_per_subject);
    else if (key == "noise") read_field(j, key, c.noise);
    else if (key == "predicates") {
      std::vector<std::string> names;
      read_field(j, key, names);
      c.predicates.clear();
      try {
        for (const auto& n : names) c.predicates.push_back(synth::rule_from_name(n));
      } catch (const std::exception& e) {
        throw unprocessable(e.what(), "synthetic.predicates");
      }
    } else {
      throw unprocessable("unknown scene field '" + key + "'", "synthetic." + key);
    }
  }
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw unprocessable(e.what(), "synthetic");
  }
  return c;
}

SessionManager::SessionManager(std::shared_ptr<const model::Model> model, ServiceConfig config)
    : model_(std::move(model)), config_(std::move(config)) {
  if (!model_) throw ContractError("service needs a model");
  config_.pipeline.validate();
}

SessionManager::~SessionManager() = default;

std::chrono::steady_clock::time_point SessionManager::now() const {
  return config_.clock ? config_.clock() : std::chrono::steady_clock::now();
}

void SessionManager::expire_locked() {
  const auto t = now();
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (!it->second->busy && t - it->second->last_used > config_.idle_timeout) {
      gone_.insert(it->first);
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
}

std::shared_ptr<SessionManager::Session> SessionManager::acquire(const std::string& id) {
  std::lock_guard lock(mutex_);
  expire_locked();
  if (gone_.count(id)) throw ServiceError(410, "gone", "session " + id + " expired or was deleted");
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "not_found", "no session " + id);
  it->second->last_used = now();
  return it->second;
}

std::string SessionManager::create_session(const nlohmann::json& request, const std::string& frames) {
  if (!request.is_object()) throw ServiceError(400, "bad_request", "request body must be a JSON object");
  if (request.contains("synthetic")) {
    const auto scene = scene_from_json(request["synthetic"]);
    {
      std::lock_guard lock(mutex_);
      expire_locked();
      if (sessions_.size() >= config_.max_sessions)
        throw ServiceError(503, "capacity", "session capacity reached; delete a session or retry later");
    }
    try {
      return create_session(synth::generate_clip(scene));
    } catch (const GenerationError& e) {
      throw unprocessable(e.what(), "synthetic");
    }
  }
  if (request.contains("document")) {
    try {
      const ClipDocument doc = clip_document_from_json(request["document"]);
      if (frames.empty()) throw unprocessable("uploaded documents need their frames", "frames");
      auto clip = synth::from_document(doc, synth::decode_frames(frames));
      synth::validate_clip(clip);
      return create_session(std::move(clip));
    } catch (const FormatError& e) {
      throw unprocessable(e.what(), e.path().empty() ? "document" : e.path());
    } catch (const ContractError& e) {
      throw unprocessable(e.what(), "document");
    }
  }
  throw ServiceError(400, "bad_request", "expected a 'synthetic' or 'document' field");
}

std::string SessionManager::create_session(synth::AnnotatedClip clip) {
  const auto& m = model_->config();
  if (clip.vocabulary.num_objects() != m.object_classes || clip.vocabulary.num_predicates() != m.predicate_classes)
    throw unprocessable("clip vocabulary does not match the model", "vocabulary");
  if (clip.height() != m.image_height || clip.width() != m.image_width ||
      clip.frames.front().channels != m.image_channels)
    throw unprocessable("clip frames do not match the model input size", "frames");

  auto s = std::make_shared<Session>();
  s->clip = std::move(clip);
  s->backbone = std::make_unique<model::BackboneSession>(model_->backbone(), s->clip.frames);
  std::lock_guard lock(mutex_);
  expire_locked();
  if (sessions_.size() >= config_.max_sessions)
    throw ServiceError(503, "capacity", "session capacity reached; delete a session or retry later");
  static thread_local std::mt19937_64 rng(std::random_device{}());
  std::ostringstream id;
  id << std::hex << rng() << "-" << ++counter_;
  s->id = id.str();
  s->created = s->last_used = now();
  sessions_[s->id] = s;
  return s->id;
}

nlohmann::json SessionManager::describe(const std::string& id) {
  const auto s = acquire(id);
  std::lock_guard lock(s->outputs_mutex);
  return {{"id", s->id},
          {"api_version", kApiVersion},
          {"frame_count", s->clip.frame_count()},
          {"height", s->clip.height()},
          {"width", s->clip.width()},
          {"channels", s->clip.frames.front().channels},
          {"vocabulary", to_json(s->clip.vocabulary)},
          {"prompt_count", s->outputs.size()},
          {"busy", s->busy.load()}};
}

nlohmann::json SessionManager::submit_prompt(const std::string& id, const nlohmann::json& body) {
  const auto s = acquire(id);
  VisualPrompt prompt;
  try {
    prompt = prompt_from_json(body, "prompt");
    prompt.validate();
  } catch (const FormatError& e) {
    throw unprocessable(e.what(), e.path());
  } catch (const ContractError& e) {
    throw unprocessable(e.what(), "prompt");
  }
  if (prompt.frame < 0 || prompt.frame >= s->clip.frame_count())
    throw unprocessable("frame " + std::to_string(prompt.frame) + " outside the clip", "prompt.frame");
  if (prompt.mask && (prompt.mask->height() != s->clip.height() || prompt.mask->width() != s->clip.width()))
    throw unprocessable("mask size does not match the clip", "prompt.mask");

  bool expected = false;
  if (!s->busy.compare_exchange_strong(expected, true))
    throw ServiceError(409, "busy", "a prompt is already running on session " + id);
  struct Release {
    std::atomic<bool>& flag;
    ~Release() { flag = false; }
  } release{s->busy};
  if (config_.on_run_start) config_.on_run_start(id);

  auto result = pipeline::run(*model_, *s->backbone, s->clip.vocabulary, prompt, config_.pipeline);
  nlohmann::json out{{"prompt_index", 0},
                     {"subject_found", result.subject_found},
                     {"prompt_confidence", result.prompt_confidence},
                     {"scene_graph", to_json(result.graph)}};
  std::lock_guard lock(s->outputs_mutex);
  out["prompt_index"] = s->outputs.size();
  s->outputs.push_back(std::move(result));
  return out;
}

nlohmann::json SessionManager::graph(const std::string& id) {
  const auto s = acquire(id);
  std::lock_guard lock(s->outputs_mutex);
  nlohmann::json outputs = nlohmann::json::array();
  for (std::size_t i = 0; i < s->outputs.size(); ++i)
    outputs.push_back({{"prompt_index", i},
                       {"subject_found", s->outputs[i].subject_found},
                       {"prompt_confidence", s->outputs[i].prompt_confidence},
                       {"scene_graph", to_json(s->outputs[i].graph)}});
  return {{"id", s->id}, {"outputs", outputs}};
}

nlohmann::json SessionManager::overlays(const std::string& id, int frame) {
  const auto s = acquire(id);
  if (frame < 0 || frame >= s->clip.frame_count())
    throw unprocessable("frame " + std::to_string(frame) + " outside the clip", "frame");
  const auto& vocab = s->clip.vocabulary;
  const int h = s->clip.height(), w = s->clip.width();
  std::lock_guard lock(s->outputs_mutex);
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t p = 0; p < s->outputs.size(); ++p) {
    const auto& tracklets = s->outputs[p].graph.tracklets;
    bool subject_done = false;
    for (std::size_t i = 0; i < tracklets.size(); ++i) {
      const auto& t = tracklets[i];
      if (!t.subject_tube.covers(frame)) continue;
      if (!subject_done) {
        const auto mask = t.subject_tube.at(frame, h, w);
        list.push_back({{"prompt_index", p},
                        {"tracklet_index", nullptr},
                        {"role", "subject"},
                        {"class", vocab.object_classes[static_cast<std::size_t>(t.subject_class)]},
                        {"mask", to_json(mask)},
                        {"area", mask.area()}});
        subject_done = true;
      }
      const auto mask = t.object_tube.at(frame, h, w);
      list.push_back({{"prompt_index", p},
                      {"tracklet_index", i},
                      {"role", "object"},
                      {"class", vocab.object_classes[static_cast<std::size_t>(t.object_class)]},
                      {"subject_class", vocab.object_classes[static_cast<std::size_t>(t.subject_class)]},
                      {"predicate", vocab.predicate_classes[static_cast<std::size_t>(t.predicate_class)]},
                      {"confidence", t.confidence},
                      {"mask", to_json(mask)},
                      {"area", mask.area()}});
    }
  }
  return {{"id", s->id}, {"frame", frame}, {"overlays", list}};
}

std::string SessionManager::frame_png(const std::string& id, int frame) {
  const auto s = acquire(id);
  if (frame < 0 || frame >= s->clip.frame_count())
    throw unprocessable("frame " + std::to_string(frame) + " outside the clip", "frame");
  return encode_png(s->clip.frames[static_cast<std::size_t>(frame)]);
}

void SessionManager::remove(const std::string& id) {
  std::lock_guard lock(mutex_);
  expire_locked();
  if (gone_.count(id)) throw ServiceError(410, "gone", "session " + id + " expired or was deleted");
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "not_found", "no session " + id);
  if (it->second->busy) throw ServiceError(409, "busy", "session " + id + " is running a prompt");
  sessions_.erase(it);
  gone_.insert(id);
}

std::size_t SessionManager::size() {
  std::lock_guard lock(mutex_);
  expire_locked();
  return sessions_.size();
}

}  // namespace ivsg::service
