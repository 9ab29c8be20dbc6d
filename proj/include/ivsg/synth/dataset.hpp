#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ivsg/synth/generator.hpp"

namespace ivsg::synth {

inline constexpr char kFramesMagic[4] = {'I', 'V', 'F', 'R'};
inline constexpr std::uint32_t kFramesVersion = 1;

/// Raw-frame container: magic "IVFR", then little-endian uint32 version,
/// frames, height, width, channels, then float32 samples in row-major
/// frame × height × width × channels order.
void write_frames(const std::vector<Image>& frames, const std::filesystem::path& path);
std::string encode_frames(const std::vector<Image>& frames);
std::vector<Image> read_frames(const std::filesystem::path& path);
/// Parses a container held in memory; `name` labels errors.
std::vector<Image> decode_frames(const std::string& bytes, const std::string& name = "frames");

struct Dataset {
  Vocabulary vocabulary;
  std::vector<AnnotatedClip> train;
  std::vector<AnnotatedClip> eval;
};

/// Clip i uses a seed derived from (config.seed, i). Clips whose seed is
/// infeasible are re-drawn with the next derived seed.
std::vector<AnnotatedClip> generate_clips(const SceneConfig& config, int count);

/// Seed-stable split: clip indices shuffled with config.seed, the first
/// round(count * split_ratio) go to train.
Dataset generate_dataset(const SceneConfig& config, int count, double split_ratio);

/// Writes `<dir>/{train,eval}/clip_NNNN.{json,frames}` plus `<dir>/manifest.json`.
Dataset generate_dataset(const SceneConfig& config, int count, double split_ratio, const std::filesystem::path& dir);

void save_clip(const AnnotatedClip& clip, const std::filesystem::path& json_path);
/// Reads an interchange JSON document and the raw-frame container named by
/// its `frames_file` (resolved next to the JSON), then validates the result.
AnnotatedClip load_external_clip(const std::filesystem::path& json_path);

/// Loads every clip of one split ("train" or "eval") in file-name order.
std::vector<AnnotatedClip> load_split(const std::filesystem::path& dir, const std::string& split);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace ivsg::synth
