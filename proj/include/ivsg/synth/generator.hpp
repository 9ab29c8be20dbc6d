#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ivsg/core/image.hpp"
#include "ivsg/core/interchange.hpp"
#include "ivsg/core/types.hpp"

namespace ivsg::synth {

/// Geometric predicate rules. For an ordered pair (subject, object) that is
/// in interaction range on a frame, the first rule in the configured list
/// that holds decides the label.
enum class PredicateRule { Touching, Above, Below, LeftOf, RightOf, Near };

const char* rule_name(PredicateRule rule);
PredicateRule rule_from_name(const std::string& name);

struct SceneConfig {
  std::uint64_t seed = 0;
  int frames = 8;
  int height = 64;
  int width = 64;
  int channels = 3;
  int num_entities = 3;
  int object_class_count = 4;  // real classes; the vocabulary adds a null class
  std::vector<PredicateRule> predicates{PredicateRule::Touching, PredicateRule::Above, PredicateRule::Near};
  int max_interactions_per_subject = 2;
  double noise = 0.05;
  double near_radius = 26.0;  // centroid distance in pixels below which a pair is in range
  int min_extent = 5;         // disc radius / rectangle half-side, pixels
  int max_extent = 8;
  int max_speed = 1;          // integer pixels per frame on each axis
  // Rejection margin (pixels) keeping every label away from its decision
  // boundary: gaps, centroid offsets and range distances.
  double margin = 3.0;
  bool stable_relations = true;  // labels constant over the clip
  bool require_interaction = true;
  int max_retries = 500;

  /// Throws ContractError on an invalid configuration.
  void validate() const;
  Vocabulary vocabulary() const;
};

struct AnnotatedClip {
  Vocabulary vocabulary;
  std::vector<Image> frames;
  std::vector<EntityRecord> entities;
  std::vector<InteractionTracklet> ground_truth;  // ordered by (subject, object, t_start)

  int frame_count() const { return static_cast<int>(frames.size()); }
  int height() const { return frames.empty() ? 0 : frames[0].height; }
  int width() const { return frames.empty() ? 0 : frames[0].width; }
  const EntityRecord* entity(int id) const;
  /// Entities that are the subject of at least one ground-truth tracklet.
  std::vector<int> subject_entities() const;
  /// Ground-truth tracklets whose subject is `entity_id`.
  std::vector<InteractionTracklet> tracklets_of(int entity_id) const;

  bool operator==(const AnnotatedClip&) const = default;
};

/// Deterministic for a fixed config; throws GenerationError when no valid
/// scene is found within `max_retries` attempts.
AnnotatedClip generate_clip(const SceneConfig& config);

/// Ground-truth tracklets recomputed from entity masks with the configured
/// predicate rules (the same labeler the generator uses).
std::vector<InteractionTracklet> label_interactions(const std::vector<EntityRecord>& entities, int frames, int height,
                                                    int width, const std::vector<PredicateRule>& rules,
                                                    double near_radius);

ClipDocument to_document(const AnnotatedClip& clip, const std::string& frames_file);
AnnotatedClip from_document(const ClipDocument& doc, std::vector<Image> frames);

/// Invariant check: disjoint entity masks, windows within the clip, frame
/// sizes consistent. Throws FormatError.
void validate_clip(const AnnotatedClip& clip);

}  // namespace ivsg::synth
