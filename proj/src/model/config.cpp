#include "ivsg/model/config.hpp"

#include "ivsg/core/error.hpp"

namespace ivsg::model {

void ModelConfig::validate() const {
  if (image_height < 4 || image_width < 4 || image_channels < 1) throw ContractError("invalid image shape");
  if (object_classes < 2 || predicate_classes < 2) throw ContractError("vocabularies need a real class plus null");
  if (dim < 4 || dim % 4 != 0) throw ContractError("dim must be a positive multiple of 4");
  if (heads < 1 || dim % heads != 0) throw ContractError("dim must be divisible by heads");
  if (hires_channels < 1 || mid_channels < 1 || mlp_hidden < 1 || upscale_channels < 1 || class_hidden < 1 ||
      point_head_hidden < 1)
    throw ContractError("layer widths must be positive");
  if (encoder_layers < 0 || decoder_layers < 0 || discovery_layers < 0)
    throw ContractError("layer counts must be non-negative");
  if (num_queries < 1) throw ContractError("num_queries must be >= 1");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"image_height", c.image_height},
          {"image_width", c.image_width},
          {"image_channels", c.image_channels},
          {"object_classes", c.object_classes},
          {"predicate_classes", c.predicate_classes},
          {"hires_channels", c.hires_channels},
          {"mid_channels", c.mid_channels},
          {"dim", c.dim},
          {"heads", c.heads},
          {"encoder_layers", c.encoder_layers},
          {"decoder_layers", c.decoder_layers},
          {"mlp_hidden", c.mlp_hidden},
          {"upscale_channels", c.upscale_channels},
          {"freeze_backbone", c.freeze_backbone},
          {"num_queries", c.num_queries},
          {"discovery_layers", c.discovery_layers},
          {"point_head_hidden", c.point_head_hidden},
          {"class_hidden", c.class_hidden}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(e.what(), std::string("model.") + key);
    }
  };
  get("image_height", c.image_height);
  get("image_width", c.image_width);
  get("image_channels", c.image_channels);
  get("object_classes", c.object_classes);
  get("predicate_classes", c.predicate_classes);
  get("hires_channels", c.hires_channels);
  get("mid_channels", c.mid_channels);
  get("dim", c.dim);
  get("heads", c.heads);
  get("encoder_layers", c.encoder_layers);
  get("decoder_layers", c.decoder_layers);
  get("mlp_hidden", c.mlp_hidden);
  get("upscale_channels", c.upscale_channels);
  get("freeze_backbone", c.freeze_backbone);
  get("num_queries", c.num_queries);
  get("discovery_layers", c.discovery_layers);
  get("point_head_hidden", c.point_head_hidden);
  get("class_hidden", c.class_hidden);
  c.validate();
  return c;
}

}  // namespace ivsg::model
