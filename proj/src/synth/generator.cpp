#include "ivsg/synth/generator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <random>

#include "ivsg/core/error.hpp"

namespace ivsg::synth {

const char* rule_name(PredicateRule rule) {
  switch (rule) {
    case PredicateRule::Touching: return "touching";
    case PredicateRule::Above: return "above";
    case PredicateRule::Below: return "below";
    case PredicateRule::LeftOf: return "left_of";
    case PredicateRule::RightOf: return "right_of";
    case PredicateRule::Near: return "near";
  }
  return "near";
}

PredicateRule rule_from_name(const std::string& name) {
  for (auto r : {PredicateRule::Touching, PredicateRule::Above, PredicateRule::Below, PredicateRule::LeftOf,
                 PredicateRule::RightOf, PredicateRule::Near})
    if (name == rule_name(r)) return r;
  throw FormatError("unknown predicate rule '" + name + "'");
}

void SceneConfig::validate() const {
  if (frames < 1) throw ContractError("frames must be >= 1");
  if (height < 8 || width < 8) throw ContractError("frame too small");
  if (channels < 1) throw ContractError("channels must be >= 1");
  if (num_entities < 1) throw ContractError("num_entities must be >= 1");
  if (object_class_count < 1) throw ContractError("object vocabulary needs a real class");
  if (predicates.empty()) throw ContractError("predicate vocabulary needs a real predicate");
  if (max_interactions_per_subject < 0 || max_interactions_per_subject > std::max(0, num_entities - 1))
    throw ContractError("max_interactions_per_subject must be <= num_entities - 1");
  if (min_extent < 1 || max_extent < min_extent) throw ContractError("invalid entity extents");
  if (max_speed < 0) throw ContractError("max_speed must be >= 0");
  if (noise < 0) throw ContractError("noise must be >= 0");
  if (max_retries < 1) throw ContractError("max_retries must be >= 1");
}

Vocabulary SceneConfig::vocabulary() const {
  std::vector<std::string> names;
  for (auto r : predicates) names.emplace_back(rule_name(r));
  return Vocabulary::make(object_class_count, names);
}

const EntityRecord* AnnotatedClip::entity(int id) const {
  for (const auto& e : entities)
    if (e.id == id) return &e;
  return nullptr;
}

std::vector<int> AnnotatedClip::subject_entities() const {
  std::vector<int> out;
  for (const auto& t : ground_truth)
    if (std::find(out.begin(), out.end(), t.subject_entity) == out.end()) out.push_back(t.subject_entity);
  return out;
}

std::vector<InteractionTracklet> AnnotatedClip::tracklets_of(int entity_id) const {
  std::vector<InteractionTracklet> out;
  for (const auto& t : ground_truth)
    if (t.subject_entity == entity_id) out.push_back(t);
  return out;
}

namespace {

struct Shape {
  bool disc = true;
  double cx = 0, cy = 0;  // pixel coordinates of the center at frame 0
  double ex = 0, ey = 0;  // half extents
  int vx = 0, vy = 0;
  int object_class = 0;
};

Bitmap rasterize(const Shape& s, int t, int height, int width) {
  Bitmap b(height, width);
  const double cx = s.cx + s.vx * t, cy = s.cy + s.vy * t;
  const int r0 = std::max(0, static_cast<int>(std::floor(cy - s.ey - 1)));
  const int r1 = std::min(height - 1, static_cast<int>(std::ceil(cy + s.ey + 1)));
  const int c0 = std::max(0, static_cast<int>(std::floor(cx - s.ex - 1)));
  const int c1 = std::min(width - 1, static_cast<int>(std::ceil(cx + s.ex + 1)));
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) {
      const double dx = c + 0.5 - cx, dy = r + 0.5 - cy;
      const bool in = s.disc ? dx * dx + dy * dy <= s.ex * s.ex : std::abs(dx) <= s.ex && std::abs(dy) <= s.ey;
      if (in) b.at(r, c) = 1;
    }
  return b;
}

bool inside_frame(const Shape& s, int frames, int height, int width) {
  for (int t : {0, frames - 1}) {
    const double cx = s.cx + s.vx * t, cy = s.cy + s.vy * t;
    if (cx - s.ex < 1 || cx + s.ex > width - 1 || cy - s.ey < 1 || cy + s.ey > height - 1) return false;
  }
  return true;
}

// Pixel-space geometry of one mask on one frame.
struct Geometry {
  Bitmap mask;
  double row = 0, col = 0;  // centroid, pixel units
  bool empty = true;
};

Geometry geometry_of(Bitmap mask) {
  Geometry g;
  double sr = 0, sc = 0;
  std::size_t n = 0;
  for (int r = 0; r < mask.height; ++r)
    for (int c = 0; c < mask.width; ++c)
      if (mask.at(r, c)) {
        sr += r + 0.5;
        sc += c + 0.5;
        ++n;
      }
  g.empty = n == 0;
  if (n) {
    g.row = sr / n;
    g.col = sc / n;
  }
  g.mask = std::move(mask);
  return g;
}

// True when some foreground pixel of `a` lies within Chebyshev distance
// `reach` of a foreground pixel of `b`.
bool within_reach(const Bitmap& a, const Bitmap& b, int reach) {
  for (int r = 0; r < a.height; ++r)
    for (int c = 0; c < a.width; ++c) {
      if (!a.at(r, c)) continue;
      for (int dr = -reach; dr <= reach; ++dr)
        for (int dc = -reach; dc <= reach; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr >= 0 && rr < b.height && cc >= 0 && cc < b.width && b.at(rr, cc)) return true;
        }
    }
  return false;
}

constexpr int kNone = -1;

int label_pair(const Geometry& s, const Geometry& o, const std::vector<PredicateRule>& rules, double near_radius) {
  if (s.empty || o.empty) return kNone;
  const bool touching = within_reach(s.mask, o.mask, 1);
  const double dist = std::hypot(s.row - o.row, s.col - o.col);
  if (!touching && !(dist < near_radius)) return kNone;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    bool holds = false;
    switch (rules[i]) {
      case PredicateRule::Touching: holds = touching; break;
      case PredicateRule::Above: holds = s.row < o.row; break;
      case PredicateRule::Below: holds = s.row > o.row; break;
      case PredicateRule::LeftOf: holds = s.col < o.col; break;
      case PredicateRule::RightOf: holds = s.col > o.col; break;
      case PredicateRule::Near: holds = true; break;
    }
    if (holds) return static_cast<int>(i);
  }
  return kNone;
}

std::vector<std::vector<Geometry>> geometries(const std::vector<EntityRecord>& entities, int frames, int height,
                                              int width) {
  std::vector<std::vector<Geometry>> out(entities.size());
  for (std::size_t e = 0; e < entities.size(); ++e)
    for (int t = 0; t < frames; ++t) out[e].push_back(geometry_of(rle_decode(entities[e].tube.at(t, height, width))));
  return out;
}

// labels[s][o][t]
using LabelTable = std::vector<std::vector<std::vector<int>>>;

LabelTable label_table(const std::vector<std::vector<Geometry>>& geo, int frames,
                       const std::vector<PredicateRule>& rules, double near_radius) {
  const std::size_t n = geo.size();
  LabelTable table(n, std::vector<std::vector<int>>(n, std::vector<int>(frames, kNone)));
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < n; ++o) {
      if (s == o) continue;
      for (int t = 0; t < frames; ++t) table[s][o][t] = label_pair(geo[s][t], geo[o][t], rules, near_radius);
    }
  return table;
}

std::vector<InteractionTracklet> tracklets_from_table(const LabelTable& table, const std::vector<EntityRecord>& entities,
                                                      int frames) {
  std::vector<InteractionTracklet> out;
  for (std::size_t s = 0; s < table.size(); ++s)
    for (std::size_t o = 0; o < table.size(); ++o) {
      if (s == o) continue;
      int t = 0;
      while (t < frames) {
        const int label = table[s][o][t];
        if (label == kNone) {
          ++t;
          continue;
        }
        int end = t;
        while (end + 1 < frames && table[s][o][end + 1] == label) ++end;
        InteractionTracklet tr;
        tr.subject_class = entities[s].object_class;
        tr.object_class = entities[o].object_class;
        tr.predicate_class = label;
        tr.confidence = 1.0;
        tr.subject_entity = entities[s].id;
        tr.object_entity = entities[o].id;
        for (auto [tube, ent] : {std::pair{&tr.subject_tube, s}, std::pair{&tr.object_tube, o}}) {
          tube->t_start = t;
          tube->t_end = end;
          for (int k = t; k <= end; ++k)
            tube->masks.push_back(entities[ent].tube.masks[static_cast<std::size_t>(k - entities[ent].tube.t_start)]);
        }
        out.push_back(std::move(tr));
        t = end + 1;
      }
    }
  return out;
}

struct Palette {
  static std::vector<float> color(int object_class, int channels) {
    static const float table[8][3] = {{0.90f, 0.20f, 0.20f}, {0.20f, 0.85f, 0.25f}, {0.25f, 0.35f, 0.95f},
                                      {0.90f, 0.85f, 0.20f}, {0.80f, 0.30f, 0.85f}, {0.20f, 0.85f, 0.85f},
                                      {0.95f, 0.55f, 0.15f}, {0.60f, 0.60f, 0.60f}};
    std::vector<float> c(channels);
    for (int ch = 0; ch < channels; ++ch) {
      if (object_class < 8 && ch < 3) {
        c[ch] = table[object_class][ch];
      } else {
        // Deterministic hash-derived appearance for large vocabularies.
        std::uint64_t h = (static_cast<std::uint64_t>(object_class) + 1) * 0x9E3779B97F4A7C15ull + ch * 0xBF58476D1CE4E5B9ull;
        h ^= h >> 31;
        c[ch] = 0.2f + 0.7f * static_cast<float>((h >> 11) % 1000) / 1000.0f;
      }
    }
    return c;
  }
};

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::optional<Shape> propose(const SceneConfig& cfg, std::mt19937_64& rng, const std::vector<Shape>& placed) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> extent(cfg.min_extent, cfg.max_extent);
  std::uniform_int_distribution<int> speed(-cfg.max_speed, cfg.max_speed);
  std::uniform_int_distribution<int> cls(0, cfg.object_class_count - 1);

  Shape s;
  s.object_class = cls(rng);
  s.disc = s.object_class % 2 == 0;
  s.ex = extent(rng);
  s.ey = s.disc ? s.ex : extent(rng);
  s.vx = speed(rng);
  s.vy = speed(rng);
  const double mode = unit(rng);
  if (!placed.empty() && mode < 0.7) {
    const Shape& anchor = placed[std::uniform_int_distribution<int>(0, static_cast<int>(placed.size()) - 1)(rng)];
    const double theta = 2.0 * std::numbers::pi * unit(rng);
    const double reach = std::max(anchor.ex, anchor.ey) + std::max(s.ex, s.ey);
    double dist;
    if (mode < 0.2) {
      // Walk outward from overlap until the two shapes just separate.
      s.vx = anchor.vx;
      s.vy = anchor.vy;
      dist = std::max(1.0, (anchor.ex + s.ex) * 0.5);
      const Bitmap a0 = rasterize(anchor, 0, cfg.height, cfg.width);
      for (; dist < 40; dist += 0.5) {
        s.cx = std::round((anchor.cx + dist * std::cos(theta)) * 2.0) / 2.0;
        s.cy = std::round((anchor.cy + dist * std::sin(theta)) * 2.0) / 2.0;
        if (!within_reach(a0, rasterize(s, 0, cfg.height, cfg.width), 0)) break;
      }
    } else {
      if (unit(rng) < 0.7) {
        s.vx = anchor.vx;
        s.vy = anchor.vy;
      }
      const double lo = reach + cfg.margin + 2.0;
      const double hi = cfg.near_radius - cfg.margin;
      if (hi <= lo) return std::nullopt;
      dist = lo + (hi - lo) * unit(rng);
    }
    s.cx = anchor.cx + dist * std::cos(theta);
    s.cy = anchor.cy + dist * std::sin(theta);
  } else {
    s.cx = s.ex + 1 + unit(rng) * (cfg.width - 2 * s.ex - 2);
    s.cy = s.ey + 1 + unit(rng) * (cfg.height - 2 * s.ey - 2);
  }
  // Snap so that integer motion keeps the raster an exact translation.
  s.cx = std::round(s.cx * 2.0) / 2.0;
  s.cy = std::round(s.cy * 2.0) / 2.0;
  if (!inside_frame(s, cfg.frames, cfg.height, cfg.width)) return std::nullopt;
  return s;
}

EntityRecord entity_of(const Shape& s, int id, int frames, int height, int width) {
  EntityRecord e;
  e.id = id;
  e.object_class = s.object_class;
  e.tube.t_start = 0;
  e.tube.t_end = frames - 1;
  for (int t = 0; t < frames; ++t) e.tube.masks.push_back(rle_encode(rasterize(s, t, height, width)));
  return e;
}

// Scene-level acceptance: disjoint masks, labels stable and away from every
// decision boundary, interaction cap respected.
bool acceptable(const SceneConfig& cfg, const std::vector<std::vector<Geometry>>& geo, const LabelTable& labels) {
  const std::size_t n = geo.size();
  const int gap = static_cast<int>(std::ceil(1.0 + cfg.margin));
  bool any = false;
  for (int t = 0; t < cfg.frames; ++t) {
    for (std::size_t a = 0; a < n; ++a) {
      int partners = 0;
      for (std::size_t b = 0; b < n; ++b) {
        if (a == b) continue;
        if (labels[a][b][t] != kNone) ++partners;
        if (b < a) continue;
        const auto& ga = geo[a][t];
        const auto& gb = geo[b][t];
        if (within_reach(ga.mask, gb.mask, 0)) return false;  // overlap
        const bool touching = within_reach(ga.mask, gb.mask, 1);
        if (!touching && within_reach(ga.mask, gb.mask, gap)) return false;
        const double dist = std::hypot(ga.row - gb.row, ga.col - gb.col);
        if (!touching && std::abs(dist - cfg.near_radius) < cfg.margin) return false;
        if (touching || dist < cfg.near_radius) {
          if (std::abs(ga.row - gb.row) < cfg.margin) return false;
          for (auto r : cfg.predicates)
            if ((r == PredicateRule::LeftOf || r == PredicateRule::RightOf) && std::abs(ga.col - gb.col) < cfg.margin)
              return false;
        }
      }
      if (partners > cfg.max_interactions_per_subject) return false;
    }
  }
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b) continue;
      for (int t = 0; t < cfg.frames; ++t) {
        if (labels[a][b][t] != kNone) any = true;
        if (cfg.stable_relations && labels[a][b][t] != labels[a][b][0]) return false;
      }
    }
  return any || !cfg.require_interaction;
}

}  // namespace

std::vector<InteractionTracklet> label_interactions(const std::vector<EntityRecord>& entities, int frames, int height,
                                                    int width, const std::vector<PredicateRule>& rules,
                                                    double near_radius) {
  const auto geo = geometries(entities, frames, height, width);
  return tracklets_from_table(label_table(geo, frames, rules, near_radius), entities, frames);
}

AnnotatedClip generate_clip(const SceneConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(mix(cfg.seed));
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    // Entities are placed one at a time; each must keep the partial scene
    // acceptable, which makes crowded configurations feasible.
    constexpr int kPlacementTries = 60;
    SceneConfig partial = cfg;
    partial.require_interaction = false;
    std::vector<Shape> shapes;
    std::vector<EntityRecord> entities;
    std::vector<std::vector<Geometry>> geo;
    for (int k = 0; k < cfg.num_entities; ++k) {
      bool placed = false;
      for (int tries = 0; tries < kPlacementTries && !placed; ++tries) {
        auto s = propose(cfg, rng, shapes);
        if (!s) continue;
        auto e = entity_of(*s, k, cfg.frames, cfg.height, cfg.width);
        geo.push_back(geometries({e}, cfg.frames, cfg.height, cfg.width)[0]);
        if (acceptable(partial, geo, label_table(geo, cfg.frames, cfg.predicates, cfg.near_radius))) {
          shapes.push_back(*s);
          entities.push_back(std::move(e));
          placed = true;
        } else {
          geo.pop_back();
        }
      }
      if (!placed) break;
    }
    if (static_cast<int>(entities.size()) != cfg.num_entities) continue;
    const auto labels = label_table(geo, cfg.frames, cfg.predicates, cfg.near_radius);
    if (!acceptable(cfg, geo, labels)) continue;

    AnnotatedClip clip;
    clip.vocabulary = cfg.vocabulary();
    clip.ground_truth = tracklets_from_table(labels, entities, cfg.frames);

    std::mt19937_64 noise_rng(mix(cfg.seed ^ 0xA5A5A5A5ull));
    std::normal_distribution<float> noise(0.0f, static_cast<float>(cfg.noise));
    std::uniform_real_distribution<float> jitter(-0.08f, 0.08f);
    std::vector<std::vector<float>> colors;
    for (const auto& s : shapes) {
      auto c = Palette::color(s.object_class, cfg.channels);
      for (auto& v : c) v += jitter(noise_rng);
      colors.push_back(std::move(c));
    }
    for (int t = 0; t < cfg.frames; ++t) {
      Image img{cfg.height, cfg.width, cfg.channels,
                std::vector<float>(static_cast<std::size_t>(cfg.height) * cfg.width * cfg.channels, 0.1f)};
      for (std::size_t k = 0; k < entities.size(); ++k) {
        const Bitmap& m = geo[k][t].mask;
        for (int r = 0; r < cfg.height; ++r)
          for (int c = 0; c < cfg.width; ++c)
            if (m.at(r, c))
              for (int ch = 0; ch < cfg.channels; ++ch)
                img.data[(static_cast<std::size_t>(r) * cfg.width + c) * cfg.channels + ch] = colors[k][ch];
      }
      if (cfg.noise > 0)
        for (auto& v : img.data) v += noise(noise_rng);
      clip.frames.push_back(std::move(img));
    }
    clip.entities = std::move(entities);
    return clip;
  }
  throw GenerationError("no valid scene for seed " + std::to_string(cfg.seed) + " after " +
                        std::to_string(cfg.max_retries) + " attempts");
}

ClipDocument to_document(const AnnotatedClip& clip, const std::string& frames_file) {
  ClipDocument doc;
  doc.vocabulary = clip.vocabulary;
  doc.frame_count = clip.frame_count();
  doc.height = clip.height();
  doc.width = clip.width();
  doc.frames_file = frames_file;
  doc.entities = clip.entities;
  for (int subject : clip.subject_entities()) {
    SceneGraphOutput g;
    g.subject_entity = subject;
    const auto& tube = clip.entity(subject)->tube;
    g.subject_prompt = VisualPrompt::with_mask(tube.t_start, tube.masks.front());
    g.tracklets = clip.tracklets_of(subject);
    doc.scene_graphs.push_back(std::move(g));
  }
  return doc;
}

AnnotatedClip from_document(const ClipDocument& doc, std::vector<Image> frames) {
  AnnotatedClip clip;
  clip.vocabulary = doc.vocabulary;
  clip.frames = std::move(frames);
  clip.entities = doc.entities;
  for (const auto& g : doc.scene_graphs)
    for (const auto& t : g.tracklets) clip.ground_truth.push_back(t);
  if (clip.frame_count() != doc.frame_count)
    throw FormatError("frame container holds " + std::to_string(clip.frame_count()) + " frames, document declares " +
                          std::to_string(doc.frame_count),
                      "frame_count");
  for (const auto& f : clip.frames)
    if (f.height != doc.height || f.width != doc.width) throw FormatError("frame size mismatch", "frame_size");
  return clip;
}

void validate_clip(const AnnotatedClip& clip) {
  validate_document(to_document(clip, ""));
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    const auto& f = clip.frames[i];
    if (f.height != clip.height() || f.width != clip.width() || f.channels != clip.frames[0].channels ||
        f.data.size() != static_cast<std::size_t>(f.height) * f.width * f.channels)
      throw FormatError("inconsistent frame", "frames[" + std::to_string(i) + "]");
  }
  for (std::size_t i = 0; i < clip.ground_truth.size(); ++i) {
    const auto& t = clip.ground_truth[i];
    if (!clip.entity(t.subject_entity) || !clip.entity(t.object_entity))
      throw FormatError("tracklet references a missing entity", "ground_truth[" + std::to_string(i) + "]");
  }
}

}  // namespace ivsg::synth
