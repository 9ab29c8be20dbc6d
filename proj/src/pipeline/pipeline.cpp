#include "ivsg/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ivsg/core/error.hpp"

namespace ivsg::pipeline {

using model::Mat;

void PipelineConfig::validate() const {
  if (discovery_cadence < 1) throw ContractError("discovery_cadence must be >= 1");
  if (min_track_length < 1) throw ContractError("min_track_length must be >= 1");
  for (double v : {link_iou_threshold, activity_confidence_floor, subject_confidence_floor, subject_overlap_iou})
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("pipeline thresholds must lie in [0, 1]");
}

nlohmann::json to_json(const PipelineConfig& c) {
  return {{"discovery_cadence", c.discovery_cadence},
          {"link_iou_threshold", c.link_iou_threshold},
          {"min_track_length", c.min_track_length},
          {"activity_confidence_floor", c.activity_confidence_floor},
          {"subject_confidence_floor", c.subject_confidence_floor},
          {"subject_overlap_iou", c.subject_overlap_iou}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  c.discovery_cadence = j.value("discovery_cadence", c.discovery_cadence);
  c.link_iou_threshold = j.value("link_iou_threshold", c.link_iou_threshold);
  c.min_track_length = j.value("min_track_length", c.min_track_length);
  c.activity_confidence_floor = j.value("activity_confidence_floor", c.activity_confidence_floor);
  c.subject_confidence_floor = j.value("subject_confidence_floor", c.subject_confidence_floor);
  c.subject_overlap_iou = j.value("subject_overlap_iou", c.subject_overlap_iou);
  c.validate();
  return c;
}

namespace {

struct Detection {
  BinaryMask mask;
  Mat object_logits;
  Mat predicate_logits;
  double confidence = 0.0;
};

struct Track {
  int start = 0;
  std::vector<Detection> frames;  // consecutive from `start`
  int last() const { return start + static_cast<int>(frames.size()) - 1; }
};

}  // namespace

PipelineResult run(const model::Model& model, model::BackboneSession& session, const Vocabulary& vocabulary,
                   const VisualPrompt& prompt, const PipelineConfig& config, DiscoverySource source) {
  config.validate();
  prompt.validate();
  const int n = session.frame_count();
  if (prompt.frame < 0 || prompt.frame >= n) throw ContractError("prompt frame outside the clip");
  if (vocabulary.num_objects() != model.config().object_classes ||
      vocabulary.num_predicates() != model.config().predicate_classes)
    throw ContractError("vocabulary does not match the model");
  if (source.heatmap && !source.rng) throw ContractError("heuristic discovery needs an rng");

  const auto& sch = model.sch();
  const auto& didm = model.didm();
  PipelineResult result;
  result.graph.subject_prompt = prompt;

  // Subject: prompt frame, then mask-prompt propagation in both directions.
  std::vector<model::SegmentationResult> subject(static_cast<std::size_t>(n));
  auto& first = subject[static_cast<std::size_t>(prompt.frame)];
  first = session.segment(prompt.frame, prompt);
  result.prompt_confidence = first.confidence;
  if (first.mask.is_empty() || first.confidence < config.subject_confidence_floor) return result;
  result.subject_found = true;
  for (int dir : {1, -1}) {
    BinaryMask carry = first.mask;
    for (int t = prompt.frame + dir; t >= 0 && t < n; t += dir) {
      auto& s = subject[static_cast<std::size_t>(t)];
      s = session.segment(t, VisualPrompt::with_mask(t, carry));
      if (!s.mask.is_empty()) carry = s.mask;
    }
  }
  result.subject_tube = MaskTube{0, n - 1, {}};
  for (const auto& s : subject) result.subject_tube.masks.push_back(s.mask);

  Mat subject_logits = Mat::Zero(1, sch.object_classes() - 1);
  int subject_frames = 0;
  std::vector<Mat> subject_tokens(static_cast<std::size_t>(n));
  std::vector<Track> tracks;
  std::vector<int> open;  // tracks that reached the previous frame

  auto detect = [&](int t, const model::SegmentationResult& seg) -> std::optional<Detection> {
    if (seg.mask.is_empty()) return std::nullopt;
    const auto& sm = subject[static_cast<std::size_t>(t)].mask;
    if (!sm.is_empty() && mask_iou(seg.mask, sm) >= config.subject_overlap_iou) return std::nullopt;
    const auto& grid = session.encode_frame(t);
    return Detection{seg.mask, sch.classify_entity(grid, seg.mask, model::EntityHead::Object),
                     sch.classify_predicate(subject_tokens[static_cast<std::size_t>(t)], seg.object_token),
                     seg.confidence};
  };

  for (int t = 0; t < n; ++t) {
    const auto& s = subject[static_cast<std::size_t>(t)];
    subject_tokens[static_cast<std::size_t>(t)] = s.object_token;
    if (s.mask.is_empty()) {
      open.clear();
      continue;
    }
    const auto& grid = session.encode_frame(t);
    subject_logits += sch.classify_entity(grid, s.mask, model::EntityHead::Subject);
    ++subject_frames;

    std::vector<Detection> found;
    if (std::abs(t - prompt.frame) % config.discovery_cadence == 0) {
      const model::DiscoveryOutput disc =
          source.heatmap ? model::heuristic_discover(*source.heatmap, didm.config().num_queries, grid.channels,
                                                     *source.rng)
                         : didm.discover(grid, didm.build_subject_token(grid, s.mask), &s.mask);
      result.discoveries.push_back({t, disc.points});
      for (const Point2& p : disc.points) {
        const Point2 q{std::clamp(p.x, 0.0, 1.0), std::clamp(p.y, 0.0, 1.0)};
        if (auto d = detect(t, session.segment(t, VisualPrompt::at_point(t, q)))) found.push_back(std::move(*d));
      }
      // Same-frame duplicates: keep the most confident of overlapping masks.
      std::stable_sort(found.begin(), found.end(),
                       [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
      std::vector<Detection> kept;
      for (auto& d : found) {
        const bool dup = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
          return mask_iou(k.mask, d.mask) >= config.link_iou_threshold;
        });
        if (!dup) kept.push_back(std::move(d));
      }
      found = std::move(kept);
    }

    // Greedy IoU linking against tracks that reached t - 1.
    struct Pair {
      double iou;
      int track, det;
    };
    std::vector<Pair> pairs;
    for (int ti : open)
      for (int di = 0; di < static_cast<int>(found.size()); ++di) {
        const double iou = mask_iou(tracks[static_cast<std::size_t>(ti)].frames.back().mask,
                                    found[static_cast<std::size_t>(di)].mask);
        if (iou >= config.link_iou_threshold && iou > 0.0) pairs.push_back({iou, ti, di});
      }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.iou > b.iou; });
    std::vector<bool> det_used(found.size(), false);
    std::vector<int> next;
    for (const auto& p : pairs) {
      if (det_used[static_cast<std::size_t>(p.det)] || std::find(next.begin(), next.end(), p.track) != next.end())
        continue;
      det_used[static_cast<std::size_t>(p.det)] = true;
      tracks[static_cast<std::size_t>(p.track)].frames.push_back(std::move(found[static_cast<std::size_t>(p.det)]));
      next.push_back(p.track);
    }
    // Unlinked open tracks continue by mask propagation.
    for (int ti : open) {
      if (std::find(next.begin(), next.end(), ti) != next.end()) continue;
      auto& track = tracks[static_cast<std::size_t>(ti)];
      auto d = detect(t, session.segment(t, VisualPrompt::with_mask(t, track.frames.back().mask)));
      if (!d) continue;
      const bool taken = std::any_of(next.begin(), next.end(), [&](int other) {
        return mask_iou(tracks[static_cast<std::size_t>(other)].frames.back().mask, d->mask) >=
               config.link_iou_threshold;
      });
      if (taken) continue;
      track.frames.push_back(std::move(*d));
      next.push_back(ti);
    }
    for (std::size_t di = 0; di < found.size(); ++di) {
      if (det_used[di]) continue;
      tracks.push_back(Track{t, {std::move(found[di])}});
      next.push_back(static_cast<int>(tracks.size()) - 1);
    }
    std::sort(next.begin(), next.end());
    open = std::move(next);
  }

  // Per-track frame-averaged logits, then ranking.
  std::vector<const Track*> kept;
  std::vector<Mat> object_logits, predicate_logits;
  for (const auto& track : tracks) {
    if (static_cast<int>(track.frames.size()) < config.min_track_length) continue;
    Mat o = Mat::Zero(1, sch.object_classes()), r = Mat::Zero(1, sch.predicate_classes());
    for (const auto& d : track.frames) o += d.object_logits, r += d.predicate_logits;
    const double k = static_cast<double>(track.frames.size());
    kept.push_back(&track);
    object_logits.push_back(o / k);
    predicate_logits.push_back(r / k);
  }
  if (subject_frames > 0) subject_logits /= subject_frames;
  const auto triplets =
      model::assemble_triplets(subject_logits, object_logits, predicate_logits, static_cast<int>(kept.size()));

  const int cap = didm.config().num_queries;
  for (const auto& tp : triplets) {
    if (!tp.active || tp.confidence < config.activity_confidence_floor) continue;
    if (static_cast<int>(result.graph.tracklets.size()) == cap) break;
    const Track& track = *kept[static_cast<std::size_t>(tp.query)];
    InteractionTracklet out;
    out.subject_class = tp.subject_class;
    out.object_class = tp.object_class;
    out.predicate_class = tp.predicate_class;
    out.confidence = tp.confidence;
    out.object_tube = MaskTube{track.start, track.last(), {}};
    out.subject_tube = MaskTube{track.start, track.last(), {}};
    for (int t = track.start; t <= track.last(); ++t) {
      out.object_tube.masks.push_back(track.frames[static_cast<std::size_t>(t - track.start)].mask);
      out.subject_tube.masks.push_back(subject[static_cast<std::size_t>(t)].mask);
    }
    validate_tracklet(out, vocabulary, n);
    result.graph.tracklets.push_back(std::move(out));
  }
  return result;
}

PipelineResult run(const model::Model& model, const std::vector<Image>& frames, const Vocabulary& vocabulary,
                   const VisualPrompt& prompt, const PipelineConfig& config, DiscoverySource source) {
  model::BackboneSession session(model.backbone(), frames);
  return run(model, session, vocabulary, prompt, config, source);
}

}  // namespace ivsg::pipeline
