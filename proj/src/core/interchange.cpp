#include "ivsg/core/interchange.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ivsg/core/error.hpp"

namespace ivsg {

using nlohmann::json;

namespace {

const json& field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw FormatError("expected an object", path);
  auto it = j.find(key);
  if (it == j.end()) throw FormatError("missing field", path + "." + key);
  return *it;
}

int int_field(const json& j, const char* key, const std::string& path) {
  const auto& v = field(j, key, path);
  if (!v.is_number_integer()) throw FormatError("expected an integer", path + "." + key);
  return v.get<int>();
}

double number_field(const json& j, const char* key, const std::string& path) {
  const auto& v = field(j, key, path);
  if (!v.is_number()) throw FormatError("expected a number", path + "." + key);
  return v.get<double>();
}

std::vector<std::string> string_list(const json& j, const std::string& path) {
  if (!j.is_array()) throw FormatError("expected an array", path);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string()) throw FormatError("expected a string", path + "[" + std::to_string(i) + "]");
    out.push_back(j[i].get<std::string>());
  }
  return out;
}

std::string idx(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

}  // namespace

json to_json(const BinaryMask& mask) {
  return json{{"size", {mask.height(), mask.width()}}, {"runs", mask.runs()}};
}

json to_json(const MaskTube& tube) {
  json masks = json::array();
  for (const auto& m : tube.masks) masks.push_back(to_json(m));
  return json{{"t_start", tube.t_start}, {"t_end", tube.t_end}, {"masks", std::move(masks)}};
}

json to_json(const VisualPrompt& prompt) {
  json j{{"kind", to_string(prompt.kind)}, {"frame", prompt.frame}};
  if (prompt.point) j["point"] = {prompt.point->x, prompt.point->y};
  if (prompt.box) j["box"] = {prompt.box->x_min, prompt.box->y_min, prompt.box->x_max, prompt.box->y_max};
  if (prompt.mask) j["mask"] = to_json(*prompt.mask);
  return j;
}

json to_json(const InteractionTracklet& t) {
  return json{{"subject_class", t.subject_class},     {"object_class", t.object_class},
              {"predicate_class", t.predicate_class}, {"confidence", t.confidence},
              {"t_start", t.t_start()},               {"t_end", t.t_end()},
              {"subject_entity", t.subject_entity},   {"object_entity", t.object_entity},
              {"subject_tube", to_json(t.subject_tube)}, {"object_tube", to_json(t.object_tube)}};
}

json to_json(const SceneGraphOutput& g) {
  json tracklets = json::array();
  for (const auto& t : g.tracklets) tracklets.push_back(to_json(t));
  return json{{"subject_prompt", to_json(g.subject_prompt)},
              {"subject_entity", g.subject_entity},
              {"tracklets", std::move(tracklets)}};
}

json to_json(const Vocabulary& v) {
  return json{{"object_classes", v.object_classes},
              {"predicate_classes", v.predicate_classes},
              {"null_object_index", v.null_object_index()},
              {"null_predicate_index", v.null_predicate_index()}};
}

json to_json(const ClipDocument& doc) {
  json entities = json::array();
  for (const auto& e : doc.entities)
    entities.push_back(json{{"id", e.id}, {"class", e.object_class}, {"tube", to_json(e.tube)}});
  json graphs = json::array();
  for (const auto& g : doc.scene_graphs) graphs.push_back(to_json(g));
  return json{{"format", kInterchangeFormat},
              {"version", kInterchangeVersion},
              {"vocabulary", to_json(doc.vocabulary)},
              {"frame_count", doc.frame_count},
              {"frame_size", {{"height", doc.height}, {"width", doc.width}}},
              {"frames_file", doc.frames_file},
              {"entities", std::move(entities)},
              {"scene_graphs", std::move(graphs)}};
}

BinaryMask mask_from_json(const json& j, const std::string& path) {
  const auto& size = field(j, "size", path);
  if (!size.is_array() || size.size() != 2 || !size[0].is_number_integer() || !size[1].is_number_integer())
    throw FormatError("expected [height, width]", path + ".size");
  const int h = size[0].get<int>(), w = size[1].get<int>();
  if (h <= 0 || w <= 0) throw FormatError("non-positive mask size", path + ".size");
  const auto& runs_j = field(j, "runs", path);
  if (!runs_j.is_array() || runs_j.empty()) throw FormatError("expected a non-empty run array", path + ".runs");
  std::vector<std::uint32_t> runs;
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < runs_j.size(); ++i) {
    if (!runs_j[i].is_number_unsigned() && !(runs_j[i].is_number_integer() && runs_j[i].get<long long>() >= 0))
      throw FormatError("run length must be a non-negative integer", idx(path + ".runs", i));
    runs.push_back(runs_j[i].get<std::uint32_t>());
    sum += runs.back();
  }
  if (sum != static_cast<std::uint64_t>(h) * w)
    throw FormatError("run lengths sum to " + std::to_string(sum) + ", expected " + std::to_string(h * w),
                      path + ".runs");
  return BinaryMask(h, w, std::move(runs));
}

MaskTube tube_from_json(const json& j, const std::string& path) {
  MaskTube tube;
  tube.t_start = int_field(j, "t_start", path);
  tube.t_end = int_field(j, "t_end", path);
  const auto& masks = field(j, "masks", path);
  if (!masks.is_array()) throw FormatError("expected an array", path + ".masks");
  for (std::size_t i = 0; i < masks.size(); ++i) tube.masks.push_back(mask_from_json(masks[i], idx(path + ".masks", i)));
  if (tube.t_start < 0 || tube.t_end < tube.t_start) throw FormatError("invalid window", path);
  if (static_cast<int>(tube.masks.size()) != tube.length())
    throw FormatError("mask count does not match window length", path + ".masks");
  return tube;
}

VisualPrompt prompt_from_json(const json& j, const std::string& path) {
  const auto& kind_j = field(j, "kind", path);
  if (!kind_j.is_string()) throw FormatError("expected a string", path + ".kind");
  VisualPrompt p;
  try {
    p.kind = prompt_kind_from_string(kind_j.get<std::string>());
  } catch (const FormatError& e) {
    throw FormatError(e.what(), path + ".kind");
  }
  p.frame = int_field(j, "frame", path);
  auto numbers = [&](const char* key, std::size_t n) {
    const auto& a = field(j, key, path);
    if (!a.is_array() || a.size() != n) throw FormatError("expected " + std::to_string(n) + " numbers", path + "." + key);
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) {
      if (!a[i].is_number()) throw FormatError("expected a number", idx(path + "." + key, i));
      out.push_back(a[i].get<double>());
    }
    return out;
  };
  switch (p.kind) {
    case PromptKind::Point: {
      auto v = numbers("point", 2);
      p.point = Point2{v[0], v[1]};
      break;
    }
    case PromptKind::Box: {
      auto v = numbers("box", 4);
      p.box = Box{v[0], v[1], v[2], v[3]};
      break;
    }
    case PromptKind::Mask:
      p.mask = mask_from_json(field(j, "mask", path), path + ".mask");
      break;
  }
  try {
    p.validate();
  } catch (const ContractError& e) {
    throw FormatError(e.what(), path);
  }
  return p;
}

InteractionTracklet tracklet_from_json(const json& j, const std::string& path) {
  InteractionTracklet t;
  t.subject_class = int_field(j, "subject_class", path);
  t.object_class = int_field(j, "object_class", path);
  t.predicate_class = int_field(j, "predicate_class", path);
  t.confidence = number_field(j, "confidence", path);
  if (j.contains("subject_entity")) t.subject_entity = int_field(j, "subject_entity", path);
  if (j.contains("object_entity")) t.object_entity = int_field(j, "object_entity", path);
  t.subject_tube = tube_from_json(field(j, "subject_tube", path), path + ".subject_tube");
  t.object_tube = tube_from_json(field(j, "object_tube", path), path + ".object_tube");
  return t;
}

SceneGraphOutput scene_graph_from_json(const json& j, const std::string& path) {
  SceneGraphOutput g;
  g.subject_prompt = prompt_from_json(field(j, "subject_prompt", path), path + ".subject_prompt");
  if (j.contains("subject_entity")) g.subject_entity = int_field(j, "subject_entity", path);
  const auto& ts = field(j, "tracklets", path);
  if (!ts.is_array()) throw FormatError("expected an array", path + ".tracklets");
  for (std::size_t i = 0; i < ts.size(); ++i) g.tracklets.push_back(tracklet_from_json(ts[i], idx(path + ".tracklets", i)));
  return g;
}

Vocabulary vocabulary_from_json(const json& j, const std::string& path) {
  Vocabulary v;
  v.object_classes = string_list(field(j, "object_classes", path), path + ".object_classes");
  v.predicate_classes = string_list(field(j, "predicate_classes", path), path + ".predicate_classes");
  try {
    v.validate();
  } catch (const ContractError& e) {
    throw FormatError(e.what(), path);
  }
  if (j.contains("null_object_index") && int_field(j, "null_object_index", path) != v.null_object_index())
    throw FormatError("null class must be the last object class", path + ".null_object_index");
  if (j.contains("null_predicate_index") && int_field(j, "null_predicate_index", path) != v.null_predicate_index())
    throw FormatError("null class must be the last predicate class", path + ".null_predicate_index");
  return v;
}

namespace {

void check_tube(const MaskTube& tube, const ClipDocument& doc, const std::string& path) {
  if (tube.t_end >= doc.frame_count)
    throw FormatError("window [" + std::to_string(tube.t_start) + ", " + std::to_string(tube.t_end) +
                          "] exceeds clip length " + std::to_string(doc.frame_count),
                      path);
  for (std::size_t i = 0; i < tube.masks.size(); ++i)
    if (tube.masks[i].height() != doc.height || tube.masks[i].width() != doc.width)
      throw FormatError("mask size differs from frame size", idx(path + ".masks", i));
}

}  // namespace

void validate_document(const ClipDocument& doc) {
  if (doc.frame_count < 1) throw FormatError("clip has no frames", "frame_count");
  if (doc.height < 1 || doc.width < 1) throw FormatError("non-positive frame size", "frame_size");
  try {
    doc.vocabulary.validate();
  } catch (const ContractError& e) {
    throw FormatError(e.what(), "vocabulary");
  }
  const int null_obj = doc.vocabulary.null_object_index();
  const int null_pred = doc.vocabulary.null_predicate_index();

  std::vector<int> ids;
  for (std::size_t i = 0; i < doc.entities.size(); ++i) {
    const auto& e = doc.entities[i];
    const std::string path = idx("entities", i);
    if (e.object_class < 0 || e.object_class >= null_obj) throw FormatError("class out of range", path + ".class");
    if (std::find(ids.begin(), ids.end(), e.id) != ids.end()) throw FormatError("duplicate entity id", path + ".id");
    ids.push_back(e.id);
    check_tube(e.tube, doc, path + ".tube");
  }
  // Entity masks must be mutually disjoint within a frame.
  for (int t = 0; t < doc.frame_count; ++t) {
    std::vector<std::uint8_t> owner(static_cast<std::size_t>(doc.height) * doc.width, 0);
    for (std::size_t i = 0; i < doc.entities.size(); ++i) {
      const auto& tube = doc.entities[i].tube;
      if (!tube.covers(t)) continue;
      const Bitmap bm = rle_decode(tube.masks[t - tube.t_start]);
      for (std::size_t p = 0; p < bm.data.size(); ++p) {
        if (!bm.data[p]) continue;
        if (owner[p])
          throw FormatError("entity masks overlap at frame " + std::to_string(t) + " with entity index " +
                                std::to_string(owner[p] - 1),
                            idx("entities", i) + ".tube");
        owner[p] = static_cast<std::uint8_t>(i + 1);
      }
    }
  }

  for (std::size_t g = 0; g < doc.scene_graphs.size(); ++g) {
    const auto& sg = doc.scene_graphs[g];
    const std::string gpath = idx("scene_graphs", g);
    if (sg.subject_prompt.frame >= doc.frame_count)
      throw FormatError("prompt frame outside clip", gpath + ".subject_prompt.frame");
    for (std::size_t k = 0; k < sg.tracklets.size(); ++k) {
      const auto& t = sg.tracklets[k];
      const std::string path = idx(gpath + ".tracklets", k);
      check_tube(t.subject_tube, doc, path + ".subject_tube");
      check_tube(t.object_tube, doc, path + ".object_tube");
      if (t.subject_tube.t_start != t.object_tube.t_start || t.subject_tube.t_end != t.object_tube.t_end)
        throw FormatError("subject and object windows differ", path);
      if (t.subject_class < 0 || t.subject_class >= null_obj) throw FormatError("class out of range", path + ".subject_class");
      if (t.object_class < 0 || t.object_class >= null_obj) throw FormatError("class out of range", path + ".object_class");
      if (t.predicate_class < 0 || t.predicate_class >= null_pred)
        throw FormatError("predicate out of range", path + ".predicate_class");
      if (!(t.confidence >= 0.0 && t.confidence <= 1.0)) throw FormatError("confidence outside [0,1]", path + ".confidence");
      auto known = [&](int id) { return id < 0 || std::find(ids.begin(), ids.end(), id) != ids.end(); };
      if (!known(t.subject_entity)) throw FormatError("unknown entity", path + ".subject_entity");
      if (!known(t.object_entity)) throw FormatError("unknown entity", path + ".object_entity");
    }
    for (std::size_t k = 1; k < sg.tracklets.size(); ++k)
      if (sg.tracklets[k].confidence > sg.tracklets[k - 1].confidence)
        throw FormatError("tracklets not sorted by descending confidence", idx(gpath + ".tracklets", k));
  }
}

ClipDocument clip_document_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("expected an object", "$");
  const auto& fmt = field(j, "format", "$");
  if (!fmt.is_string() || fmt.get<std::string>() != kInterchangeFormat)
    throw FormatError("unexpected format tag", "format");
  if (int_field(j, "version", "$") != kInterchangeVersion) throw FormatError("unsupported version", "version");

  ClipDocument doc;
  doc.vocabulary = vocabulary_from_json(field(j, "vocabulary", "$"), "vocabulary");
  doc.frame_count = int_field(j, "frame_count", "$");
  const auto& size = field(j, "frame_size", "$");
  doc.height = int_field(size, "height", "frame_size");
  doc.width = int_field(size, "width", "frame_size");
  if (j.contains("frames_file")) {
    if (!j["frames_file"].is_string()) throw FormatError("expected a string", "frames_file");
    doc.frames_file = j["frames_file"].get<std::string>();
  }
  if (j.contains("entities")) {
    const auto& es = j["entities"];
    if (!es.is_array()) throw FormatError("expected an array", "entities");
    for (std::size_t i = 0; i < es.size(); ++i) {
      const std::string path = idx("entities", i);
      EntityRecord e;
      e.id = int_field(es[i], "id", path);
      e.object_class = int_field(es[i], "class", path);
      e.tube = tube_from_json(field(es[i], "tube", path), path + ".tube");
      doc.entities.push_back(std::move(e));
    }
  }
  const auto& gs = field(j, "scene_graphs", "$");
  if (!gs.is_array()) throw FormatError("expected an array", "scene_graphs");
  for (std::size_t i = 0; i < gs.size(); ++i) doc.scene_graphs.push_back(scene_graph_from_json(gs[i], idx("scene_graphs", i)));
  validate_document(doc);
  return doc;
}

std::string serialize(const ClipDocument& doc) { return to_json(doc).dump(); }

void save_document(const ClipDocument& doc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << serialize(doc);
  if (!out) throw IoError("write failed: " + path.string());
}

ClipDocument load_document(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what(), "$");
  }
  return clip_document_from_json(j);
}

}  // namespace ivsg
