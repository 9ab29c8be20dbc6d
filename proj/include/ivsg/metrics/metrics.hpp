#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ivsg/core/types.hpp"
#include "ivsg/model/model.hpp"
#include "ivsg/pipeline/pipeline.hpp"
#include "ivsg/synth/generator.hpp"

namespace ivsg::metrics {

/// Fraction of ground-truth tracklets matched one-to-one by the first `k`
/// predictions (given in descending confidence) with equal subject, object
/// and predicate labels and both tube IoUs ≥ tau. The matching is a maximum
/// matching built by augmenting paths in confidence order. Returns 1 when
/// `ground_truth` is empty.
double recall_at_k(const std::vector<InteractionTracklet>& predictions,
                   const std::vector<InteractionTracklet>& ground_truth, int k, double tau,
                   IouMode mode = IouMode::Tube);

/// As recall_at_k over all predictions, labels ignored.
double spir(const std::vector<InteractionTracklet>& predictions, const std::vector<InteractionTracklet>& ground_truth,
            double tau, IouMode mode = IouMode::Tube);

/// Points and ground-truth object masks of one frame.
struct PlrFrame {
  std::vector<Point2> points;
  std::vector<BinaryMask> objects;
};

/// Ground-truth objects are paired with points by minimum total squared
/// distance to the mask centroid (requires objects ≤ points). Per frame:
/// paired points inside their mask / objects. Frames without objects are
/// skipped; nullopt when no frame counts.
std::optional<double> plr_frame(const PlrFrame& frame);
std::optional<double> plr(const std::vector<PlrFrame>& frames);

enum class DiscoveryMode { Learned, Heuristic };

struct EvalConfig {
  int k = 3;
  double tau = 0.5;
  int runs = 25;
  IouMode iou_mode = IouMode::Tube;
  std::uint64_t seed = 0;
  PromptKind prompt = PromptKind::Point;
  DiscoveryMode discovery = DiscoveryMode::Learned;

  /// Throws ContractError.
  void validate() const;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over runs
};

struct RunMetrics {
  double recall_at_k = 0.0;
  double spir = 0.0;
  double plr = 0.0;
};

struct EpisodeMetrics {
  int clip = 0;
  int subject = 0;
  RunMetrics mean;  // over runs
  int not_found = 0;
};

struct EvalReport {
  EvalConfig config;
  pipeline::PipelineConfig pipeline;
  int effective_runs = 0;  // 1 for box and mask prompts
  std::vector<RunMetrics> runs;
  Summary recall_at_k, spir, plr;
  std::vector<EpisodeMetrics> episodes;

  nlohmann::json to_json() const;
  /// Percentages, "mean ± std"; the ± term is omitted for mask prompts.
  std::string to_table() const;
};

/// Object masks of the training interactions, for the heuristic baseline.
model::Heatmap object_heatmap(const std::vector<synth::AnnotatedClip>& clips, const model::ModelConfig& config);

/// Every (clip, subject with ground truth) is one episode, prompted on the
/// first frame the subject is visible. Point prompts are drawn uniformly
/// from the subject's mask with a per-run seed; box and mask prompts run
/// once. Per run, metrics are averaged over episodes.
EvalReport robustness_protocol(const model::Model& model, const std::vector<synth::AnnotatedClip>& clips,
                               const EvalConfig& config, const pipeline::PipelineConfig& pipeline_config = {},
                               const model::Heatmap* heatmap = nullptr);

const char* to_string(DiscoveryMode mode);
const char* to_string(IouMode mode);

}  // namespace ivsg::metrics
