#include "ivsg/synth/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ivsg/core/error.hpp"

namespace fs = std::filesystem;

namespace ivsg::synth {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t attempt) {
  std::uint64_t x = seed * 0x9E3779B97F4A7C15ull ^ (index + 1) * 0xD1B54A32D192ED03ull ^ attempt * 0x8CB92BA72F3D8DD7ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::string clip_name(int index) {
  std::ostringstream ss;
  ss << "clip_" << std::setw(4) << std::setfill('0') << index;
  return ss.str();
}

nlohmann::json scene_json(const SceneConfig& c) {
  nlohmann::json preds = nlohmann::json::array();
  for (auto r : c.predicates) preds.push_back(rule_name(r));
  return {{"frames", c.frames},       {"height", c.height},
          {"width", c.width},         {"channels", c.channels},
          {"num_entities", c.num_entities},
          {"object_class_count", c.object_class_count},
          {"predicates", preds},      {"max_interactions_per_subject", c.max_interactions_per_subject},
          {"noise", c.noise},         {"near_radius", c.near_radius}};
}

}  // namespace

void write_frames(const std::vector<Image>& frames, const fs::path& path) { write_file(path, encode_frames(frames)); }

std::string encode_frames(const std::vector<Image>& frames) {
  std::string out(kFramesMagic, 4);
  put_u32(out, kFramesVersion);
  const int h = frames.empty() ? 0 : frames[0].height;
  const int w = frames.empty() ? 0 : frames[0].width;
  const int c = frames.empty() ? 0 : frames[0].channels;
  put_u32(out, static_cast<std::uint32_t>(frames.size()));
  put_u32(out, static_cast<std::uint32_t>(h));
  put_u32(out, static_cast<std::uint32_t>(w));
  put_u32(out, static_cast<std::uint32_t>(c));
  for (const auto& f : frames) {
    if (f.height != h || f.width != w || f.channels != c) throw ContractError("frames differ in shape");
    for (float v : f.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<Image> read_frames(const fs::path& path) { return decode_frames(read_file(path), path.string()); }

std::vector<Image> decode_frames(const std::string& in, const std::string& name) {
  if (in.size() < 24 || std::memcmp(in.data(), kFramesMagic, 4) != 0) throw FormatError("not a raw-frame container", name);
  if (get_u32(in, 4) != kFramesVersion) throw FormatError("unsupported frame container version", name);
  const std::uint32_t n = get_u32(in, 8), h = get_u32(in, 12), w = get_u32(in, 16), c = get_u32(in, 20);
  const std::size_t per = static_cast<std::size_t>(h) * w * c;
  if (n == 0 || per == 0 || in.size() != 24 + 4 * per * n)
    throw FormatError("frame container size does not match its header", name);
  std::vector<Image> frames;
  std::size_t at = 24;
  for (std::uint32_t t = 0; t < n; ++t) {
    Image img{static_cast<int>(h), static_cast<int>(w), static_cast<int>(c), std::vector<float>(per)};
    for (auto& v : img.data) {
      v = std::bit_cast<float>(get_u32(in, at));
      at += 4;
    }
    frames.push_back(std::move(img));
  }
  return frames;
}

std::vector<AnnotatedClip> generate_clips(const SceneConfig& config, int count) {
  std::vector<AnnotatedClip> clips;
  for (int i = 0; i < count; ++i) {
    for (int attempt = 0;; ++attempt) {
      SceneConfig c = config;
      c.seed = derive_seed(config.seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(attempt));
      try {
        clips.push_back(generate_clip(c));
        break;
      } catch (const GenerationError&) {
        if (attempt >= 20) throw;
      }
    }
  }
  return clips;
}

Dataset generate_dataset(const SceneConfig& config, int count, double split_ratio) {
  if (count < 2) throw ContractError("dataset needs at least 2 clips");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ContractError("split_ratio must be in (0, 1)");
  auto clips = generate_clips(config, count);
  std::vector<int> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(config.seed, 0xFFFFFFFFull, 0));
  std::shuffle(order.begin(), order.end(), rng);
  const int n_train = std::clamp(static_cast<int>(std::lround(count * split_ratio)), 1, count - 1);
  std::sort(order.begin(), order.begin() + n_train);
  std::sort(order.begin() + n_train, order.end());
  Dataset ds;
  ds.vocabulary = config.vocabulary();
  for (int k = 0; k < count; ++k) (k < n_train ? ds.train : ds.eval).push_back(std::move(clips[order[k]]));
  return ds;
}

Dataset generate_dataset(const SceneConfig& config, int count, double split_ratio, const fs::path& dir) {
  Dataset ds = generate_dataset(config, count, split_ratio);
  std::error_code ec;
  for (const char* split : {"train", "eval"}) {
    fs::create_directories(dir / split, ec);
    if (ec) throw IoError("cannot create " + (dir / split).string() + ": " + ec.message());
  }
  nlohmann::json manifest{{"format", "ivsg-dataset"},
                          {"version", 1},
                          {"seed", config.seed},
                          {"count", count},
                          {"split_ratio", split_ratio},
                          {"scene", scene_json(config)},
                          {"vocabulary", to_json(ds.vocabulary)}};
  for (auto [split, clips] : {std::pair<const char*, const std::vector<AnnotatedClip>*>{"train", &ds.train},
                              std::pair<const char*, const std::vector<AnnotatedClip>*>{"eval", &ds.eval}}) {
    manifest[split] = nlohmann::json::array();
    for (std::size_t i = 0; i < clips->size(); ++i) {
      const std::string name = clip_name(static_cast<int>(i));
      save_clip((*clips)[i], dir / split / (name + ".json"));
      manifest[split].push_back(std::string(split) + "/" + name + ".json");
    }
  }
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return ds;
}

void save_clip(const AnnotatedClip& clip, const fs::path& json_path) {
  const std::string frames_file = json_path.stem().string() + ".frames";
  write_frames(clip.frames, json_path.parent_path() / frames_file);
  save_document(to_document(clip, frames_file), json_path);
}

AnnotatedClip load_external_clip(const fs::path& json_path) {
  const ClipDocument doc = load_document(json_path);
  if (doc.frames_file.empty()) throw FormatError("document names no frame container", "frames_file");
  auto frames = read_frames(json_path.parent_path() / doc.frames_file);
  AnnotatedClip clip = from_document(doc, std::move(frames));
  validate_clip(clip);
  return clip;
}

std::vector<AnnotatedClip> load_split(const fs::path& dir, const std::string& split) {
  const fs::path root = dir / split;
  if (!fs::is_directory(root)) throw IoError("missing split directory " + root.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(root))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<AnnotatedClip> clips;
  for (const auto& f : files) clips.push_back(load_external_clip(f));
  return clips;
}

Dataset load_dataset(const fs::path& dir) {
  Dataset ds;
  ds.train = load_split(dir, "train");
  ds.eval = load_split(dir, "eval");
  if (!ds.train.empty()) ds.vocabulary = ds.train.front().vocabulary;
  else if (!ds.eval.empty()) ds.vocabulary = ds.eval.front().vocabulary;
  return ds;
}

}  // namespace ivsg::synth
