#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ivsg/core/mask.hpp"

namespace ivsg {

/// Object and predicate label sets. The last entry of each list is the
/// reserved null class ("no interaction" / "no relation").
struct Vocabulary {
  std::vector<std::string> object_classes;
  std::vector<std::string> predicate_classes;

  int num_objects() const { return static_cast<int>(object_classes.size()); }
  int num_predicates() const { return static_cast<int>(predicate_classes.size()); }
  int null_object_index() const { return num_objects() - 1; }
  int null_predicate_index() const { return num_predicates() - 1; }

  /// Throws ContractError when names repeat or a list is shorter than two.
  void validate() const;

  /// `object_count` real object classes and the given predicates, each list
  /// followed by its null entry.
  static Vocabulary make(int object_count, const std::vector<std::string>& predicates);

  bool operator==(const Vocabulary&) const = default;
};

struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 1.0;
  double y_max = 1.0;
  bool operator==(const Box&) const = default;
};

/// Normalized tight box around the foreground (pixel edges). Throws
/// ContractError on an empty mask.
Box tight_box(const BinaryMask& mask);

enum class PromptKind { Point, Box, Mask };

const char* to_string(PromptKind kind);
PromptKind prompt_kind_from_string(const std::string& name);

/// A point, box or mask identifying one entity on one frame.
struct VisualPrompt {
  PromptKind kind = PromptKind::Point;
  int frame = 0;
  std::optional<Point2> point;
  std::optional<Box> box;
  std::optional<BinaryMask> mask;

  static VisualPrompt at_point(int frame, Point2 p);
  static VisualPrompt with_box(int frame, Box b);
  static VisualPrompt with_mask(int frame, BinaryMask m);

  /// Throws ContractError unless exactly the field for `kind` is set and the
  /// coordinates are well formed.
  void validate() const;

  bool operator==(const VisualPrompt&) const = default;
};

/// ⟨subject, object, predicate⟩ with aligned subject and object tubes.
struct InteractionTracklet {
  int subject_class = 0;
  int object_class = 0;
  int predicate_class = 0;
  MaskTube subject_tube;
  MaskTube object_tube;
  double confidence = 1.0;
  // Entity ids within an annotated clip; -1 for model predictions.
  int subject_entity = -1;
  int object_entity = -1;

  int t_start() const { return subject_tube.t_start; }
  int t_end() const { return subject_tube.t_end; }

  bool operator==(const InteractionTracklet&) const = default;
};

/// Throws ContractError when windows disagree, classes are null/out of range,
/// or confidence lies outside [0, 1].
void validate_tracklet(const InteractionTracklet& tracklet, const Vocabulary& vocab, int clip_length);

struct SceneGraphOutput {
  VisualPrompt subject_prompt;
  std::vector<InteractionTracklet> tracklets;  // descending confidence
  int subject_entity = -1;

  bool operator==(const SceneGraphOutput&) const = default;
};

}  // namespace ivsg
