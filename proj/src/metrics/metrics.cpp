#include "ivsg/metrics/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "ivsg/core/error.hpp"
#include "ivsg/train/matcher.hpp"
#include "ivsg/train/sampler.hpp"

namespace ivsg::metrics {

namespace {

// Kuhn's augmenting paths, predictions tried in the given order.
int max_matching(const std::vector<std::vector<bool>>& ok, int gt_count) {
  std::vector<int> owner(static_cast<std::size_t>(gt_count), -1);
  std::function<bool(int, std::vector<bool>&)> augment = [&](int p, std::vector<bool>& seen) {
    for (int g = 0; g < gt_count; ++g) {
      if (!ok[static_cast<std::size_t>(p)][static_cast<std::size_t>(g)] || seen[static_cast<std::size_t>(g)]) continue;
      seen[static_cast<std::size_t>(g)] = true;
      if (owner[static_cast<std::size_t>(g)] < 0 || augment(owner[static_cast<std::size_t>(g)], seen)) {
        owner[static_cast<std::size_t>(g)] = p;
        return true;
      }
    }
    return false;
  };
  int matched = 0;
  for (int p = 0; p < static_cast<int>(ok.size()); ++p) {
    std::vector<bool> seen(static_cast<std::size_t>(gt_count), false);
    matched += augment(p, seen);
  }
  return matched;
}

double recall(const std::vector<InteractionTracklet>& predictions, const std::vector<InteractionTracklet>& gt,
              std::size_t limit, double tau, IouMode mode, bool labels) {
  if (gt.empty()) return 1.0;
  const std::size_t n = std::min(limit, predictions.size());
  std::vector<std::vector<bool>> ok(n, std::vector<bool>(gt.size(), false));
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const auto& a = predictions[p];
      const auto& b = gt[g];
      if (labels && (a.subject_class != b.subject_class || a.object_class != b.object_class ||
                     a.predicate_class != b.predicate_class))
        continue;
      ok[p][g] = tube_iou(a.subject_tube, b.subject_tube, mode) >= tau &&
                 tube_iou(a.object_tube, b.object_tube, mode) >= tau;
    }
  return static_cast<double>(max_matching(ok, static_cast<int>(gt.size()))) / static_cast<double>(gt.size());
}

}  // namespace

double recall_at_k(const std::vector<InteractionTracklet>& predictions,
                   const std::vector<InteractionTracklet>& ground_truth, int k, double tau, IouMode mode) {
  if (k < 1) throw ContractError("k must be >= 1");
  return recall(predictions, ground_truth, static_cast<std::size_t>(k), tau, mode, true);
}

double spir(const std::vector<InteractionTracklet>& predictions, const std::vector<InteractionTracklet>& ground_truth,
            double tau, IouMode mode) {
  return recall(predictions, ground_truth, predictions.size(), tau, mode, false);
}

std::optional<double> plr_frame(const PlrFrame& frame) {
  std::vector<const BinaryMask*> objects;
  for (const auto& m : frame.objects)
    if (!m.is_empty()) objects.push_back(&m);
  if (objects.empty()) return std::nullopt;
  if (frame.points.empty()) return 0.0;
  const bool transpose = objects.size() > frame.points.size();
  const std::size_t rows = transpose ? frame.points.size() : objects.size();
  const std::size_t cols = transpose ? objects.size() : frame.points.size();
  std::vector<Point2> centers;
  for (const auto* m : objects) centers.push_back(centroid(rle_decode(*m)));
  std::vector<std::vector<double>> cost(rows, std::vector<double>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t o = transpose ? c : r, p = transpose ? r : c;
      const double dx = frame.points[p].x - centers[o].x, dy = frame.points[p].y - centers[o].y;
      cost[r][c] = dx * dx + dy * dy;
    }
  const auto match = train::hungarian_match(cost);
  int inside = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t c = static_cast<std::size_t>(match.assignment[r]);
    const std::size_t o = transpose ? c : r, p = transpose ? r : c;
    inside += point_in_mask(frame.points[p], *objects[o]);
  }
  return static_cast<double>(inside) / static_cast<double>(rows);
}

std::optional<double> plr(const std::vector<PlrFrame>& frames) {
  double sum = 0.0;
  int count = 0;
  for (const auto& f : frames)
    if (const auto v = plr_frame(f)) sum += *v, ++count;
  if (count == 0) return std::nullopt;
  return sum / count;
}

void EvalConfig::validate() const {
  if (k < 1) throw ContractError("k must be >= 1");
  if (!(tau > 0.0 && tau <= 1.0)) throw ContractError("tau must lie in (0, 1]");
  if (runs < 1) throw ContractError("runs must be >= 1");
}

const char* to_string(DiscoveryMode mode) { return mode == DiscoveryMode::Learned ? "learned" : "heuristic"; }
const char* to_string(IouMode mode) { return mode == IouMode::Tube ? "tube" : "frame"; }

model::Heatmap object_heatmap(const std::vector<synth::AnnotatedClip>& clips, const model::ModelConfig& config) {
  std::vector<BinaryMask> masks;
  for (const auto& clip : clips)
    for (const auto& gt : clip.ground_truth) masks.insert(masks.end(), gt.object_tube.masks.begin(), gt.object_tube.masks.end());
  return model::heatmap_from_masks(masks, config.grid_height(), config.grid_width(), config.stride());
}

namespace {

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

std::uint64_t derive_seed(std::uint64_t seed, int run, int clip, int subject) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(run), static_cast<std::uint32_t>(clip),
                    static_cast<std::uint32_t>(subject)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

EvalReport robustness_protocol(const model::Model& model, const std::vector<synth::AnnotatedClip>& clips,
                               const EvalConfig& config, const pipeline::PipelineConfig& pipeline_config,
                               const model::Heatmap* heatmap) {
  config.validate();
  pipeline_config.validate();
  if (clips.empty()) throw ContractError("evaluation set is empty");
  if (config.discovery == DiscoveryMode::Heuristic && !heatmap)
    throw ContractError("heuristic discovery needs a heatmap");

  EvalReport report;
  report.config = config;
  report.pipeline = pipeline_config;
  report.effective_runs = config.prompt == PromptKind::Point ? config.runs : 1;

  struct Episode {
    int clip, subject, frame;
  };
  std::vector<Episode> episodes;
  for (int c = 0; c < static_cast<int>(clips.size()); ++c)
    for (int s : clips[static_cast<std::size_t>(c)].subject_entities()) {
      const auto& tube = clips[static_cast<std::size_t>(c)].entity(s)->tube;
      int frame = tube.t_start;
      while (frame < tube.t_end && tube.masks[static_cast<std::size_t>(frame - tube.t_start)].is_empty()) ++frame;
      episodes.push_back({c, s, frame});
    }
  if (episodes.empty()) throw ContractError("evaluation set has no interactions");
  report.episodes.resize(episodes.size());
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    report.episodes[e].clip = episodes[e].clip;
    report.episodes[e].subject = episodes[e].subject;
  }

  std::vector<std::unique_ptr<model::BackboneSession>> sessions;
  for (const auto& clip : clips) sessions.push_back(std::make_unique<model::BackboneSession>(model.backbone(), clip.frames));

  std::vector<double> r_all, s_all, p_all;
  for (int run = 0; run < report.effective_runs; ++run) {
    RunMetrics sum;
    for (std::size_t e = 0; e < episodes.size(); ++e) {
      const auto& ep = episodes[e];
      const auto& clip = clips[static_cast<std::size_t>(ep.clip)];
      std::mt19937_64 rng(derive_seed(config.seed, run, ep.clip, ep.subject));
      const BinaryMask mask = clip.entity(ep.subject)->tube.at(ep.frame, clip.height(), clip.width());
      VisualPrompt prompt;
      switch (config.prompt) {
        case PromptKind::Point: prompt = VisualPrompt::at_point(ep.frame, train::sample_uniform_point(mask, rng)); break;
        case PromptKind::Box: prompt = VisualPrompt::with_box(ep.frame, tight_box(mask)); break;
        case PromptKind::Mask: prompt = VisualPrompt::with_mask(ep.frame, mask); break;
      }
      pipeline::DiscoverySource source;
      if (config.discovery == DiscoveryMode::Heuristic) source = {heatmap, &rng};
      const auto result =
          pipeline::run(model, *sessions[static_cast<std::size_t>(ep.clip)], clip.vocabulary, prompt, pipeline_config, source);

      const auto gt = clip.tracklets_of(ep.subject);
      RunMetrics m;
      m.recall_at_k = recall_at_k(result.graph.tracklets, gt, config.k, config.tau, config.iou_mode);
      m.spir = spir(result.graph.tracklets, gt, config.tau, config.iou_mode);
      std::vector<PlrFrame> frames;
      for (const auto& d : result.discoveries) {
        PlrFrame f{d.points, {}};
        for (const auto& g : gt)
          if (g.subject_tube.covers(d.frame)) f.objects.push_back(g.object_tube.at(d.frame, clip.height(), clip.width()));
        frames.push_back(std::move(f));
      }
      m.plr = plr(frames).value_or(0.0);

      auto& agg = report.episodes[e];
      agg.mean.recall_at_k += m.recall_at_k / report.effective_runs;
      agg.mean.spir += m.spir / report.effective_runs;
      agg.mean.plr += m.plr / report.effective_runs;
      agg.not_found += result.subject_found ? 0 : 1;
      sum.recall_at_k += m.recall_at_k, sum.spir += m.spir, sum.plr += m.plr;
    }
    const double n = static_cast<double>(episodes.size());
    report.runs.push_back({sum.recall_at_k / n, sum.spir / n, sum.plr / n});
    r_all.push_back(report.runs.back().recall_at_k);
    s_all.push_back(report.runs.back().spir);
    p_all.push_back(report.runs.back().plr);
  }
  report.recall_at_k = summarize(r_all);
  report.spir = summarize(s_all);
  report.plr = summarize(p_all);
  return report;
}

nlohmann::json EvalReport::to_json() const {
  auto summary = [](const Summary& s) { return nlohmann::json{{"mean", s.mean}, {"std", s.std}}; };
  nlohmann::json j;
  j["config"] = {{"k", config.k},
                 {"tau", config.tau},
                 {"runs", config.runs},
                 {"iou_mode", to_string(config.iou_mode)},
                 {"seed", config.seed},
                 {"prompt", ivsg::to_string(config.prompt)},
                 {"discovery", to_string(config.discovery)}};
  j["pipeline"] = pipeline::to_json(pipeline);
  j["effective_runs"] = effective_runs;
  j["recall_at_k"] = summary(recall_at_k);
  j["spir"] = summary(spir);
  j["plr"] = summary(plr);
  j["runs"] = nlohmann::json::array();
  for (const auto& r : runs) j["runs"].push_back({{"recall_at_k", r.recall_at_k}, {"spir", r.spir}, {"plr", r.plr}});
  j["episodes"] = nlohmann::json::array();
  for (const auto& e : episodes)
    j["episodes"].push_back({{"clip", e.clip},
                             {"subject", e.subject},
                             {"recall_at_k", e.mean.recall_at_k},
                             {"spir", e.mean.spir},
                             {"plr", e.mean.plr},
                             {"not_found", e.not_found}});
  return j;
}

std::string EvalReport::to_table() const {
  const bool with_std = config.prompt != PromptKind::Mask;
  auto cell = [&](const Summary& s) {
    char buf[64];
    if (with_std) std::snprintf(buf, sizeof buf, "%6.2f ± %5.2f", 100 * s.mean, 100 * s.std);
    else std::snprintf(buf, sizeof buf, "%6.2f        ", 100 * s.mean);
    return std::string(buf);
  };
  std::ostringstream out;
  char head[160];
  std::snprintf(head, sizeof head, "%-7s %-10s %-15s %-15s %-15s\n", "prompt", "discovery",
                ("R@" + std::to_string(config.k)).c_str(), "SpIR", "PLR");
  out << head;
  char row[200];
  std::snprintf(row, sizeof row, "%-7s %-10s %s  %s  %s\n", ivsg::to_string(config.prompt), to_string(config.discovery),
                cell(recall_at_k).c_str(), cell(spir).c_str(), cell(plr).c_str());
  out << row;
  return out.str();
}

}  // namespace ivsg::metrics
