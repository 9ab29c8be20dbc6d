#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ivsg/core/types.hpp"

namespace ivsg {

inline constexpr const char* kInterchangeFormat = "ivsg-scene-graph";
inline constexpr int kInterchangeVersion = 1;

/// One annotated entity of a clip: its class and its mask over time.
struct EntityRecord {
  int id = 0;
  int object_class = 0;
  MaskTube tube;
  bool operator==(const EntityRecord&) const = default;
};

/// The per-clip interchange document shared by training, metrics, the
/// service and the browser client.
struct ClipDocument {
  Vocabulary vocabulary;
  int frame_count = 0;
  int height = 0;
  int width = 0;
  std::string frames_file;  // raw-frame container next to the JSON, may be empty
  std::vector<EntityRecord> entities;
  std::vector<SceneGraphOutput> scene_graphs;

  bool operator==(const ClipDocument&) const = default;
};

nlohmann::json to_json(const BinaryMask& mask);
nlohmann::json to_json(const MaskTube& tube);
nlohmann::json to_json(const VisualPrompt& prompt);
nlohmann::json to_json(const InteractionTracklet& tracklet);
nlohmann::json to_json(const SceneGraphOutput& graph);
nlohmann::json to_json(const Vocabulary& vocab);
nlohmann::json to_json(const ClipDocument& doc);

// Parsers throw FormatError carrying the JSON path of the offending field.
BinaryMask mask_from_json(const nlohmann::json& j, const std::string& path = "mask");
MaskTube tube_from_json(const nlohmann::json& j, const std::string& path = "tube");
VisualPrompt prompt_from_json(const nlohmann::json& j, const std::string& path = "prompt");
InteractionTracklet tracklet_from_json(const nlohmann::json& j, const std::string& path = "tracklet");
SceneGraphOutput scene_graph_from_json(const nlohmann::json& j, const std::string& path = "scene_graph");
Vocabulary vocabulary_from_json(const nlohmann::json& j, const std::string& path = "vocabulary");
/// Parses and validates: windows inside the clip, masks sized to the frame,
/// classes inside the vocabulary, entity masks disjoint per frame.
ClipDocument clip_document_from_json(const nlohmann::json& j);

void validate_document(const ClipDocument& doc);

std::string serialize(const ClipDocument& doc);
void save_document(const ClipDocument& doc, const std::filesystem::path& path);
ClipDocument load_document(const std::filesystem::path& path);

}  // namespace ivsg
