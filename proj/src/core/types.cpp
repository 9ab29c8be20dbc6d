#include "ivsg/core/types.hpp"

#include <set>

#include "ivsg/core/error.hpp"

namespace ivsg {

void Vocabulary::validate() const {
  auto check = [](const std::vector<std::string>& names, const char* what) {
    if (names.size() < 2) throw ContractError(std::string(what) + " vocabulary needs a real class and a null class");
    std::set<std::string> seen(names.begin(), names.end());
    if (seen.size() != names.size()) throw ContractError(std::string(what) + " class names are not unique");
  };
  check(object_classes, "object");
  check(predicate_classes, "predicate");
}

Vocabulary Vocabulary::make(int object_count, const std::vector<std::string>& predicates) {
  Vocabulary v;
  for (int i = 0; i < object_count; ++i) v.object_classes.push_back("class_" + std::to_string(i));
  v.object_classes.emplace_back("no_object");
  v.predicate_classes = predicates;
  v.predicate_classes.emplace_back("no_relation");
  return v;
}

const char* to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::Point: return "point";
    case PromptKind::Box: return "box";
    case PromptKind::Mask: return "mask";
  }
  return "point";
}

PromptKind prompt_kind_from_string(const std::string& name) {
  if (name == "point") return PromptKind::Point;
  if (name == "box") return PromptKind::Box;
  if (name == "mask") return PromptKind::Mask;
  throw FormatError("unknown prompt kind '" + name + "'");
}

VisualPrompt VisualPrompt::at_point(int frame, Point2 p) {
  VisualPrompt v;
  v.kind = PromptKind::Point;
  v.frame = frame;
  v.point = p;
  return v;
}

VisualPrompt VisualPrompt::with_box(int frame, Box b) {
  VisualPrompt v;
  v.kind = PromptKind::Box;
  v.frame = frame;
  v.box = b;
  return v;
}

VisualPrompt VisualPrompt::with_mask(int frame, BinaryMask m) {
  VisualPrompt v;
  v.kind = PromptKind::Mask;
  v.frame = frame;
  v.mask = std::move(m);
  return v;
}

namespace {
bool unit(double v) { return v >= 0.0 && v <= 1.0; }
}  // namespace

void VisualPrompt::validate() const {
  if (frame < 0) throw ContractError("prompt frame is negative");
  const int present = int(point.has_value()) + int(box.has_value()) + int(mask.has_value());
  if (present != 1) throw ContractError("prompt must carry exactly one of point, box, mask");
  switch (kind) {
    case PromptKind::Point:
      if (!point) throw ContractError("point prompt without a point");
      if (!unit(point->x) || !unit(point->y)) throw ContractError("point prompt outside [0,1]^2");
      break;
    case PromptKind::Box:
      if (!box) throw ContractError("box prompt without a box");
      if (!unit(box->x_min) || !unit(box->x_max) || !unit(box->y_min) || !unit(box->y_max))
        throw ContractError("box prompt outside [0,1]^2");
      if (!(box->x_min < box->x_max) || !(box->y_min < box->y_max))
        throw ContractError("box prompt has non-positive extent");
      break;
    case PromptKind::Mask:
      if (!mask) throw ContractError("mask prompt without a mask");
      break;
  }
}

void validate_tracklet(const InteractionTracklet& t, const Vocabulary& vocab, int clip_length) {
  validate_tube(t.subject_tube, clip_length);
  validate_tube(t.object_tube, clip_length);
  if (t.subject_tube.t_start != t.object_tube.t_start || t.subject_tube.t_end != t.object_tube.t_end)
    throw ContractError("subject and object tubes cover different windows");
  auto real_object = [&](int c) { return c >= 0 && c < vocab.null_object_index(); };
  if (!real_object(t.subject_class)) throw ContractError("subject class is null or out of range");
  if (!real_object(t.object_class)) throw ContractError("object class is null or out of range");
  if (t.predicate_class < 0 || t.predicate_class >= vocab.null_predicate_index())
    throw ContractError("predicate class is null or out of range");
  if (!(t.confidence >= 0.0 && t.confidence <= 1.0)) throw ContractError("confidence outside [0,1]");
}

Box tight_box(const BinaryMask& mask) {
  int r0, c0, r1, c1;
  if (!bounding_box(rle_decode(mask), r0, c0, r1, c1)) throw ContractError("tight_box of an empty mask");
  const double h = mask.height(), w = mask.width();
  return Box{c0 / w, r0 / h, (c1 + 1) / w, (r1 + 1) / h};
}

}  // namespace ivsg
