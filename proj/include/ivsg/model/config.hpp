#pragma once

#include <nlohmann/json.hpp>

namespace ivsg::model {

/// Architecture hyper-parameters shared by the backbone, DIDM and SCH.
struct ModelConfig {
  int image_height = 64;
  int image_width = 64;
  int image_channels = 3;
  int object_classes = 5;     // including null
  int predicate_classes = 4;  // including null

  // Backbone: conv encoder down to stride 4, then a two-way decoder.
  int hires_channels = 16;
  int mid_channels = 32;
  int dim = 32;  // feature channels == token width
  int heads = 2;
  int encoder_layers = 1;  // self-attention blocks over the feature grid
  int decoder_layers = 2;
  int mlp_hidden = 64;
  int upscale_channels = 8;
  bool freeze_backbone = false;

  // DIDM
  int num_queries = 3;
  int discovery_layers = 2;
  int point_head_hidden = 32;

  // SCH
  int class_hidden = 64;

  int stride() const { return 4; }
  int grid_height() const { return (image_height + 3) / 4; }
  int grid_width() const { return (image_width + 3) / 4; }

  /// Throws ContractError.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace ivsg::model
