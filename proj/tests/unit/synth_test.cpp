#include <chrono>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "ivsg/core/error.hpp"
#include "ivsg/synth/dataset.hpp"
#include "ivsg/synth/generator.hpp"
#include "predicate_oracle.hpp"

using namespace ivsg;
using namespace ivsg::synth;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> rule_names(const SceneConfig& c) {
  std::vector<std::string> out;
  for (auto r : c.predicates) out.emplace_back(rule_name(r));
  return out;
}

std::vector<test_oracles::LabeledRun> runs_of(const AnnotatedClip& clip) {
  std::vector<test_oracles::LabeledRun> out;
  for (const auto& t : clip.ground_truth)
    out.push_back({t.subject_entity, t.object_entity, t.predicate_class, t.subject_tube.t_start, t.subject_tube.t_end});
  return out;
}

std::vector<std::vector<Bitmap>> dense_masks(const AnnotatedClip& clip) {
  std::vector<std::vector<Bitmap>> out;
  for (const auto& e : clip.entities) {
    std::vector<Bitmap> per;
    for (int t = 0; t < clip.frame_count(); ++t) per.push_back(rle_decode(e.tube.at(t, clip.height(), clip.width())));
    out.push_back(std::move(per));
  }
  return out;
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("ivsg_synth_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Generator, Deterministic) {
  SceneConfig c;
  c.seed = 7;
  EXPECT_EQ(generate_clip(c), generate_clip(c));
  SceneConfig d = c;
  d.seed = 8;
  EXPECT_NE(generate_clip(c).frames, generate_clip(d).frames);
}

TEST(Generator, ShapesAndVocabulary) {
  SceneConfig c;
  c.seed = 3;
  const auto clip = generate_clip(c);
  EXPECT_EQ(clip.frame_count(), 8);
  EXPECT_EQ(clip.height(), 64);
  EXPECT_EQ(clip.width(), 64);
  EXPECT_EQ(clip.frames[0].channels, 3);
  EXPECT_EQ(clip.vocabulary.num_objects(), 5);
  EXPECT_EQ(clip.vocabulary.num_predicates(), 4);
  EXPECT_FALSE(clip.ground_truth.empty());
  EXPECT_NO_THROW(validate_clip(clip));
}

TEST(Generator, OracleReproducesGroundTruth) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    SceneConfig c;
    c.seed = seed;
    c.num_entities = 2 + static_cast<int>(seed % 4);
    c.max_interactions_per_subject = std::min(2, c.num_entities - 1);
    const auto clip = generate_clip(c);
    EXPECT_EQ(runs_of(clip), test_oracles::derive_runs(dense_masks(clip), rule_names(c), c.near_radius))
        << "seed " << seed;
  }
}

TEST(Generator, EntitiesDisjointAndInteractionCap) {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    SceneConfig c;
    c.seed = seed;
    c.num_entities = 4;
    const auto clip = generate_clip(c);
    const auto masks = dense_masks(clip);
    for (int t = 0; t < clip.frame_count(); ++t) {
      for (int p = 0; p < clip.height() * clip.width(); ++p) {
        int owners = 0;
        for (const auto& m : masks) owners += m[t].data[p];
        ASSERT_LE(owners, 1);
      }
      for (const auto& e : clip.entities) {
        int partners = 0;
        for (const auto& g : clip.ground_truth)
          partners += g.subject_entity == e.id && g.subject_tube.t_start <= t && t <= g.subject_tube.t_end;
        EXPECT_LE(partners, c.max_interactions_per_subject);
      }
    }
  }
}

TEST(Generator, AboveRuleByConstruction) {
  // Two stacked squares inside interaction range.
  const int h = 32, w = 32, frames = 3;
  EntityRecord a{0, 0, {}}, b{1, 1, {}};
  for (auto* e : {&a, &b}) {
    e->tube.t_start = 0;
    e->tube.t_end = frames - 1;
  }
  for (int t = 0; t < frames; ++t) {
    Bitmap ma(h, w), mb(h, w);
    for (int r = 4; r < 9; ++r)
      for (int col = 4 + t; col < 9 + t; ++col) ma.at(r, col) = 1;
    for (int r = 14; r < 19; ++r)
      for (int col = 6; col < 11; ++col) mb.at(r, col) = 1;
    a.tube.masks.push_back(rle_encode(ma));
    b.tube.masks.push_back(rle_encode(mb));
  }
  const auto gt = label_interactions({a, b}, frames, h, w, {PredicateRule::Above}, 22.0);
  ASSERT_EQ(gt.size(), 1u);
  EXPECT_EQ(gt[0].subject_entity, 0);
  EXPECT_EQ(gt[0].object_entity, 1);
  EXPECT_EQ(gt[0].predicate_class, 0);
  EXPECT_EQ(gt[0].subject_tube.t_start, 0);
  EXPECT_EQ(gt[0].subject_tube.t_end, frames - 1);
}

TEST(Generator, InfeasibleConfigThrows) {
  SceneConfig c;
  c.height = c.width = 12;
  c.num_entities = 5;
  c.max_interactions_per_subject = 4;
  c.max_retries = 20;
  EXPECT_THROW(generate_clip(c), GenerationError);
}

TEST(Generator, InvalidConfig) {
  SceneConfig c;
  c.num_entities = 2;
  c.max_interactions_per_subject = 2;
  EXPECT_THROW(c.validate(), ContractError);
  SceneConfig d;
  d.frames = 0;
  EXPECT_THROW(generate_clip(d), ContractError);
}

TEST(Generator, HundredClipsAreQuick) {
  const auto start = std::chrono::steady_clock::now();
  SceneConfig c;
  c.seed = 5;
  const auto clips = generate_clips(c, 100);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(clips.size(), 100u);
  EXPECT_LT(secs, 30.0);
}

TEST(FramesIo, RoundTripAndCorruption) {
  SceneConfig c;
  c.seed = 2;
  const auto clip = generate_clip(c);
  const auto dir = scratch_dir("frames");
  fs::create_directories(dir);
  write_frames(clip.frames, dir / "a.frames");
  EXPECT_EQ(read_frames(dir / "a.frames"), clip.frames);
  {
    std::ofstream out(dir / "bad.frames", std::ios::binary);
    out << "IVFR";
  }
  EXPECT_THROW(read_frames(dir / "bad.frames"), FormatError);
  EXPECT_THROW(read_frames(dir / "missing.frames"), IoError);
  fs::remove_all(dir);
}

TEST(Dataset, SplitArithmeticAndDeterminism) {
  SceneConfig c;
  c.seed = 11;
  const auto a = generate_dataset(c, 10, 0.8);
  EXPECT_EQ(a.train.size(), 8u);
  EXPECT_EQ(a.eval.size(), 2u);
  const auto b = generate_dataset(c, 10, 0.8);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.eval, b.eval);
  for (const auto& e : a.eval)
    for (const auto& t : a.train) EXPECT_NE(e.frames, t.frames);
  EXPECT_THROW(generate_dataset(c, 1, 0.5), ContractError);
  EXPECT_THROW(generate_dataset(c, 4, 1.0), ContractError);
}

TEST(Dataset, PersistAndReloadIdentically) {
  SceneConfig c;
  c.seed = 4;
  const auto dir = scratch_dir("dataset");
  const auto ds = generate_dataset(c, 6, 0.5, dir);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  const auto back = load_dataset(dir);
  EXPECT_EQ(back.train, ds.train);
  EXPECT_EQ(back.eval, ds.eval);
  for (const auto& clip : back.train) EXPECT_NO_THROW(validate_clip(clip));
  fs::remove_all(dir);
}

TEST(Dataset, ExternalClipErrors) {
  SceneConfig c;
  c.seed = 9;
  const auto clip = generate_clip(c);
  const auto dir = scratch_dir("external");
  fs::create_directories(dir);
  save_clip(clip, dir / "x.json");
  EXPECT_EQ(load_external_clip(dir / "x.json"), clip);

  auto j = nlohmann::json::parse(std::ifstream(dir / "x.json"));
  auto& tube = j["scene_graphs"][0]["tracklets"][0]["subject_tube"];
  tube["t_end"] = clip.frame_count();
  tube["masks"].push_back(tube["masks"][0]);
  std::ofstream(dir / "y.json") << j.dump();
  fs::copy_file(dir / "x.frames", dir / "y.frames");
  try {
    load_external_clip(dir / "y.json");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(e.path().find("tracklets[0]"), std::string::npos) << e.what();
  }

  auto k = nlohmann::json::parse(std::ifstream(dir / "x.json"));
  k["entities"][1]["tube"] = k["entities"][0]["tube"];
  std::ofstream(dir / "z.json") << k.dump();
  fs::copy_file(dir / "x.frames", dir / "z.frames");
  EXPECT_THROW(load_external_clip(dir / "z.json"), FormatError);
  fs::remove_all(dir);
}
