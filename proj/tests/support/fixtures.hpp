#pragma once

// A small model trained for a few seconds on 32×32 clips, so prompts give
// real masks and discovered objects. Deterministic.

#include <memory>
#include <vector>

#include "ivsg/model/model.hpp"
#include "ivsg/synth/generator.hpp"
#include "ivsg/train/trainer.hpp"

namespace test_fixtures {

inline ivsg::synth::SceneConfig small_scene(std::uint64_t seed) {
  ivsg::synth::SceneConfig s;
  s.seed = seed;
  s.frames = 4;
  s.height = s.width = 32;
  s.num_entities = 3;
  s.noise = 0.02;
  return s;
}

inline ivsg::model::ModelConfig small_model_config() {
  const auto vocab = small_scene(1).vocabulary();
  ivsg::model::ModelConfig c;
  c.image_height = c.image_width = 32;
  c.object_classes = vocab.num_objects();
  c.predicate_classes = vocab.num_predicates();
  c.hires_channels = 4;
  c.mid_channels = 6;
  c.dim = 8;
  c.heads = 2;
  c.decoder_layers = 1;
  c.mlp_hidden = 8;
  c.upscale_channels = 4;
  c.num_queries = 3;
  c.discovery_layers = 1;
  c.point_head_hidden = 8;
  c.class_hidden = 8;
  return c;
}

inline std::unique_ptr<ivsg::model::Model> small_trained_model() {
  auto m = ivsg::model::Model::create(small_model_config(), 5);
  std::vector<ivsg::synth::AnnotatedClip> clips;
  for (std::uint64_t s = 10; s < 16; ++s) clips.push_back(ivsg::synth::generate_clip(small_scene(s)));
  ivsg::train::TrainConfig tc;
  tc.model = small_model_config();
  tc.clip_length = 4;
  tc.epochs = 200;
  tc.lr_sch = 5e-3;
  tc.lr_didm_start = tc.lr_backbone_start = 5e-3;
  tc.lr_didm_end = tc.lr_backbone_end = 1e-3;
  ivsg::train::train(*m, clips, tc);
  return m;
}

}  // namespace test_fixtures
