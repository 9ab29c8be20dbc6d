#pragma once

#include <optional>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "ivsg/core/image.hpp"
#include "ivsg/core/types.hpp"
#include "ivsg/model/model.hpp"

namespace ivsg::pipeline {

struct PipelineConfig {
  int discovery_cadence = 1;  // frames between re-discoveries
  double link_iou_threshold = 0.5;
  int min_track_length = 1;
  double activity_confidence_floor = 0.0;  // triplets below this confidence are dropped
  // The prompt is rejected when the backbone's confidence on the prompt frame
  // falls below this, or the predicted mask is empty.
  double subject_confidence_floor = 0.5;
  // Detections overlapping the subject by at least this IoU are dropped.
  double subject_overlap_iou = 0.5;

  /// Throws ContractError.
  void validate() const;
  bool operator==(const PipelineConfig&) const = default;
};

nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

/// Where candidate object points come from.
struct DiscoverySource {
  const model::Heatmap* heatmap = nullptr;  // null: the learned module
  std::mt19937_64* rng = nullptr;           // required with a heatmap
};

struct FrameDiscovery {
  int frame = 0;
  std::vector<Point2> points;
};

struct PipelineResult {
  bool subject_found = false;
  SceneGraphOutput graph;
  std::vector<FrameDiscovery> discoveries;  // one entry per discovery frame, ascending
  MaskTube subject_tube;                    // full-clip window; empty when not found
  double prompt_confidence = 0.0;
};

/// Prompt → subject tube → per-frame discovery → object tracks →
/// classified tracklets. Deterministic for fixed inputs. The session's frames
/// are the clip.
PipelineResult run(const model::Model& model, model::BackboneSession& session, const Vocabulary& vocabulary,
                   const VisualPrompt& prompt, const PipelineConfig& config, DiscoverySource source = {});

/// Convenience overload owning a fresh session.
PipelineResult run(const model::Model& model, const std::vector<Image>& frames, const Vocabulary& vocabulary,
                   const VisualPrompt& prompt, const PipelineConfig& config, DiscoverySource source = {});

}  // namespace ivsg::pipeline
