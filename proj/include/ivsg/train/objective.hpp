#pragma once

#include <any>
#include <optional>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "ivsg/model/model.hpp"
#include "ivsg/synth/generator.hpp"
#include "ivsg/train/matcher.hpp"

namespace ivsg::train {

using nn::Graph;
using nn::Var;

/// Everything random about one training step, drawn up front so a step can
/// be replayed exactly.
struct Episode {
  struct Target {
    int object_entity = 0;
    int object_class = 0;
    int predicate = 0;
    Point2 point;  // p*, drawn with sample_gt_point
  };

  const synth::AnnotatedClip* clip = nullptr;
  int subject = 0;  // entity id
  int subject_class = 0;
  std::vector<int> frames;  // consecutive, ascending; contains prompt.frame
  VisualPrompt prompt;
  std::vector<std::vector<Target>> targets;  // per entry of `frames`
  std::optional<VisualPrompt> negative;      // background point with an empty target
};

/// Prompt for the subject: point via sample_gt_point, box = tight box of the
/// mask, mask = the mask itself.
VisualPrompt make_prompt(PromptKind kind, int frame, const BinaryMask& mask, std::mt19937_64& rng);

/// `window` consecutive frames around a random prompt frame; ground-truth
/// interactions of `subject` active on each frame become targets.
Episode make_episode(const synth::AnnotatedClip& clip, int subject, PromptKind kind, int window, double negative_prob,
                     std::mt19937_64& rng);

/// Record/replay tape of the discrete choices a step makes from forward
/// values (binary masks, detached points, matchings). Replaying them turns
/// the loss into a smooth function of the parameters.
class Decisions {
 public:
  template <class T>
  T take(T computed) {
    if (!replay_) {
      items_.emplace_back(computed);
      return computed;
    }
    if (pos_ >= items_.size()) throw std::logic_error("decision tape exhausted");
    return std::any_cast<T>(items_[pos_++]);
  }
  void start_replay() {
    replay_ = true;
    pos_ = 0;
  }
  bool replaying() const { return replay_; }
  std::size_t size() const { return items_.size(); }

 private:
  std::vector<std::any> items_;
  std::size_t pos_ = 0;
  bool replay_ = false;
};

struct ObjectiveOptions {
  double unmatched_weight = 0.1;  // relative weight of null-class terms for unmatched queries
  double teacher_iou = 0.5;       // predicted masks below this IoU are replaced by ground truth
  LossWeights match_weights;      // cost weights of the matcher
};

/// Unweighted per-term losses, each a 1×1 graph value averaged over its
/// instances (zero when a term has none).
struct LossTerms {
  Var bce, dice, iou, l2, sub, obj, rel;
  int masks = 0;
  int matched = 0;
  int unmatched = 0;
};

LossTerms episode_terms(Graph& g, const model::Model& model, const Episode& episode, const ObjectiveOptions& options,
                        Decisions& decisions);

struct LossBreakdown {
  double bce = 0, dice = 0, iou = 0, l2 = 0, sub = 0, obj = 0, rel = 0;
  double total = 0;
  nlohmann::json to_json() const;
};

struct TotalLoss {
  Var total;
  LossBreakdown breakdown;
};

/// Weighted sum of the terms. Throws NumericalError naming the first
/// non-finite term.
TotalLoss total_loss(Graph& g, const LossTerms& terms, const LossWeights& weights);

}  // namespace ivsg::train
