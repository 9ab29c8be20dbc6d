#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ivsg/model/model.hpp"
#include "ivsg/synth/generator.hpp"
#include "ivsg/train/matcher.hpp"
#include "ivsg/train/objective.hpp"

namespace ivsg::train {

struct TrainConfig {
  int epochs = 50;
  int clip_length = 8;  // frames per step
  int batch_size = 1;   // episodes whose gradients are summed per update
  // Learning rates. The backbone has its own group; by default it follows
  // the DIDM schedule.
  double lr_sch = 5e-4;
  double lr_didm_start = 5e-5;
  double lr_didm_end = 1e-5;
  double lr_backbone_start = 5e-5;
  double lr_backbone_end = 1e-5;
  double prompt_point = 0.49;
  double prompt_box = 0.49;
  double prompt_mask = 0.02;
  std::uint64_t seed = 0;
  double weight_decay = 1e-4;
  double grad_clip = 1.0;
  double unmatched_weight = 0.1;
  double negative_prob = 0.25;  // chance of an extra background-point prompt with an empty target
  int eval_every = 0;           // epochs; 0 disables
  int checkpoint_every = 0;     // epochs; 0 writes only the final checkpoint
  long max_steps = 0;           // 0 = epochs × ceil(clips / batch_size)
  LossWeights weights;
  model::ModelConfig model;

  /// Throws ContractError.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// `key = value` lines, `#` comments. Keys mirror the fields above:
/// epochs, clip_length, batch_size, lr.sch, lr.didm.start, lr.didm.end,
/// lr.backbone.start, lr.backbone.end, prompt.point, prompt.box, prompt.mask,
/// seed, weight_decay, grad_clip, unmatched_weight, negative_prob,
/// eval_every, checkpoint_every, max_steps, weights.<term>, model.<field>.
/// Throws FormatError naming the line.
TrainConfig parse_train_config(const std::string& text, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});
std::string to_text(const TrainConfig& config);

PromptKind sample_prompt_kind(const TrainConfig& config, std::mt19937_64& rng);

struct TrainOutputs {
  std::optional<std::filesystem::path> checkpoint;
  std::ostream* log = nullptr;  // NDJSON records
  /// Called every `eval_every` epochs with read-only weights; the returned
  /// object is logged under "eval".
  std::function<nlohmann::json(const model::Model&, int epoch)> evaluate;
};

struct TrainResult {
  long steps = 0;
  std::vector<double> losses;  // total loss per step
  LossBreakdown last;
  bool diverged = false;
  std::string divergence;
};

/// Deterministic for a fixed config and dataset. On a non-finite loss the
/// weights are restored to the last completed epoch, checkpointed, and the
/// result is flagged as diverged.
TrainResult train(model::Model& model, const std::vector<synth::AnnotatedClip>& clips, const TrainConfig& config,
                  const TrainOutputs& outputs = {});

}  // namespace ivsg::train
