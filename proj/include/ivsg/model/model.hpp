#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include <nlohmann/json.hpp>

#include "ivsg/model/backbone.hpp"
#include "ivsg/model/didm.hpp"
#include "ivsg/model/sch.hpp"

namespace ivsg::model {

/// Parameter groups; the optimizer assigns one schedule per group.
inline constexpr const char* kBackboneGroup = "backbone";
inline constexpr const char* kDidmGroup = "didm";
inline constexpr const char* kSchGroup = "sch";

/// Backbone + DIDM + SCH over one parameter store.
class Model {
 public:
  static std::unique_ptr<Model> create(const ModelConfig& config, std::uint64_t seed);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  const Backbone& backbone() const { return *backbone_; }
  const Didm& didm() const { return *didm_; }
  const Sch& sch() const { return *sch_; }

 private:
  explicit Model(const ModelConfig& config) : cfg_(config) {}

  ModelConfig cfg_;
  nn::ParameterStore store_;
  std::unique_ptr<Backbone> backbone_;
  std::unique_ptr<Didm> didm_;
  std::unique_ptr<Sch> sch_;
};

inline constexpr char kCheckpointMagic[4] = {'I', 'V', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Container: magic "IVCK", uint32 version, uint32 header length, JSON
/// header (model config, caller metadata, tensor table), then float64
/// little-endian tensor data in table order.
void save_checkpoint(const Model& model, const std::filesystem::path& path, const nlohmann::json& metadata = {});
/// Throws IoError / FormatError.
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

}  // namespace ivsg::model
