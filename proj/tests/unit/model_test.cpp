#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "ivsg/core/error.hpp"
#include "ivsg/model/model.hpp"
#include "ivsg/synth/generator.hpp"
#include "oracles.hpp"

using namespace ivsg;
using namespace ivsg::model;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.image_height = c.image_width = 32;
  c.hires_channels = 4;
  c.mid_channels = 8;
  c.dim = 16;
  c.mlp_hidden = 16;
  c.upscale_channels = 4;
  c.class_hidden = 16;
  c.point_head_hidden = 8;
  return c;
}

synth::AnnotatedClip small_clip(std::uint64_t seed) {
  synth::SceneConfig s;
  s.seed = seed;
  s.height = s.width = 32;
  s.min_extent = 3;
  s.max_extent = 5;
  s.near_radius = 16;
  s.margin = 2;
  s.num_entities = 2;
  s.max_interactions_per_subject = 1;
  return synth::generate_clip(s);
}

FeatureGrid random_grid(std::mt19937_64& rng, int h, int w, int c, int stride) {
  std::normal_distribution<double> n;
  FeatureGrid g{h, w, c, stride, Mat(h * w, c)};
  for (Eigen::Index i = 0; i < g.values.size(); ++i) g.values.data()[i] = n(rng);
  return g;
}

}  // namespace

TEST(Backbone, EncodeShapeCacheAndFiniteness) {
  auto m = Model::create(ModelConfig{}, 1);
  Image zero{64, 64, 3, std::vector<float>(64 * 64 * 3, 0.0f)};
  std::vector<Image> frames{zero, zero};
  BackboneSession s(m->backbone(), frames);
  const FeatureGrid& a = s.encode_frame(0);
  EXPECT_EQ(a.height, 16);
  EXPECT_EQ(a.width, 16);
  EXPECT_EQ(a.stride, 4);
  EXPECT_EQ(a.channels, 32);
  EXPECT_TRUE(a.values.allFinite());
  EXPECT_EQ(&s.encode_frame(0), &a);
  EXPECT_EQ(s.cache_size(), 1u);
  EXPECT_THROW(s.encode_frame(2), ContractError);
  EXPECT_THROW(s.encode_frame(-1), ContractError);
}

TEST(Backbone, SegmentAcceptsEveryPromptKind) {
  auto m = Model::create(small_config(), 2);
  const auto clip = small_clip(3);
  BackboneSession s(m->backbone(), clip.frames);
  const auto mask = clip.entities[0].tube.masks[0];
  for (const auto& p : {VisualPrompt::at_point(0, {0.4, 0.6}), VisualPrompt::with_box(0, {0.1, 0.2, 0.5, 0.6}),
                        VisualPrompt::with_mask(0, mask)}) {
    const auto r = s.segment(0, p);
    EXPECT_EQ(r.mask.height(), 32);
    EXPECT_EQ(r.mask.width(), 32);
    EXPECT_EQ(r.mask_logits.rows(), 32);
    EXPECT_EQ(r.object_token.cols(), 16);
    EXPECT_GT(r.confidence, 0.0);
    EXPECT_LT(r.confidence, 1.0);
    // mask is the zero-threshold of the logits
    const Bitmap b = rle_decode(r.mask);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) ASSERT_EQ(b.at(y, x) != 0, r.mask_logits(y, x) > 0.0);
  }
  EXPECT_THROW(s.segment(0, VisualPrompt::at_point(0, {1.5, 0.2})), ContractError);
  EXPECT_THROW(s.segment(0, VisualPrompt::with_mask(0, BinaryMask::empty(8, 8))), ContractError);
}

TEST(Backbone, DeterministicAndPropagation) {
  auto m = Model::create(small_config(), 4);
  const auto clip = small_clip(5);
  BackboneSession s1(m->backbone(), clip.frames), s2(m->backbone(), clip.frames);
  const auto p = VisualPrompt::at_point(1, {0.5, 0.5});
  const auto a = s1.segment(1, p), b = s2.segment(1, p);
  EXPECT_EQ(a.mask_logits, b.mask_logits);
  EXPECT_EQ(a.object_token, b.object_token);
  const int id = s1.track(1, p);
  const auto next = s1.propagate(id, 2);
  EXPECT_EQ(next.mask.height(), 32);
  EXPECT_THROW(s1.propagate(7, 2), ContractError);
}

TEST(Maskpool, Examples) {
  FeatureGrid g{4, 4, 3, 4, Mat::Constant(16, 3, 2.5)};
  Bitmap b(16, 16);
  for (int y = 2; y < 14; ++y)
    for (int x = 1; x < 9; ++x) b.at(y, x) = 1;
  bool fallback = true;
  EXPECT_TRUE(maskpool(g, rle_encode(b), &fallback).isApprox(Mat::Constant(1, 3, 2.5)));
  EXPECT_FALSE(fallback);

  std::mt19937_64 rng(1);
  const FeatureGrid r = random_grid(rng, 4, 4, 3, 4);
  Bitmap one(16, 16);
  for (int y = 8; y < 12; ++y)
    for (int x = 4; x < 8; ++x) one.at(y, x) = 1;
  EXPECT_TRUE(maskpool(r, rle_encode(one)).isApprox(r.values.row(2 * 4 + 1)));

  maskpool(r, BinaryMask::empty(16, 16), &fallback);
  EXPECT_TRUE(fallback);
  EXPECT_TRUE(maskpool(r, BinaryMask::empty(16, 16)).isApprox(r.values.colwise().mean()));
}

TEST(Maskpool, MatchesNaiveLoop) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const FeatureGrid g = random_grid(rng, 4, 5, 6, 4);
    const Bitmap b = test_oracles::random_bitmap(rng, 16, 20);
    Mat expected = Mat::Zero(1, 6);
    int count = 0;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 5; ++c) {
        int fg = 0;
        for (int y = 4 * r; y < 4 * r + 4; ++y)
          for (int x = 4 * c; x < 4 * c + 4; ++x) fg += b.at(y, x);
        if (2 * fg > 16) {
          expected += g.values.row(r * 5 + c);
          ++count;
        }
      }
    if (count == 0) continue;
    expected /= count;
    EXPECT_LT((maskpool(g, rle_encode(b)) - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Didm, OutputContractAndDeterminism) {
  auto m = Model::create(small_config(), 8);
  const auto clip = small_clip(9);
  BackboneSession s(m->backbone(), clip.frames);
  const auto& f = s.encode_frame(0);
  bool fallback = true;
  const Mat tok = m->didm().build_subject_token(f, clip.entities[0].tube.masks[0], &fallback);
  EXPECT_FALSE(fallback);
  const auto out = m->didm().discover(f, tok);
  ASSERT_EQ(out.points.size(), 3u);
  for (const auto& p : out.points) {
    EXPECT_GE(p.x, 0.0);
    EXPECT_LE(p.x, 1.0);
    EXPECT_GE(p.y, 0.0);
    EXPECT_LE(p.y, 1.0);
  }
  EXPECT_EQ(out.query_features.rows(), 3);
  const auto again = m->didm().discover(f, tok);
  EXPECT_EQ(again.points, out.points);
  const Mat other = m->didm().build_subject_token(f, clip.entities[1].tube.masks[0]);
  EXPECT_NE(m->didm().discover(f, other).points, out.points);
  FeatureGrid bad = f;
  bad.values(0, 0) = std::nan("");
  EXPECT_THROW(m->didm().discover(bad, tok), NumericalError);
}

TEST(Didm, UntrainedPointsAvoidSubjectCells) {
  // The point head starts at zero offset, so every point is a convex mix
  // of the centers of cells outside the subject: here the bottom half.
  auto m = Model::create(small_config(), 8);
  const auto clip = small_clip(9);
  BackboneSession s(m->backbone(), clip.frames);
  const auto& f = s.encode_frame(0);
  Bitmap top(32, 32);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 32; ++c) top.at(r, c) = 1;
  const BinaryMask subject = rle_encode(top);
  const Mat tok = m->didm().build_subject_token(f, subject);
  for (const auto& p : m->didm().discover(f, tok, &subject).points) EXPECT_GT(p.y, 0.5);
  const auto free = m->didm().discover(f, tok).points;
  EXPECT_TRUE(std::any_of(free.begin(), free.end(), [](Point2 p) { return p.y < 0.5; }));
}

TEST(Heuristic, DegenerateAndUniform) {
  Heatmap one{4, 4, std::vector<double>(16, 0.0)};
  one.probs[6] = 1.0;
  std::mt19937_64 rng(3);
  const auto d = heuristic_discover(one, 3, 8, rng);
  for (const auto& p : d.points) EXPECT_EQ(p, pixel_center(1, 2, 4, 4));
  EXPECT_TRUE(d.query_features.isZero());

  Heatmap uniform{4, 4, std::vector<double>(16, 1.0 / 16)};
  std::vector<int> counts(16, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto p = heuristic_discover(uniform, 1, 8, rng).points[0];
    const auto [r, c] = pixel_of(p, 4, 4);
    ++counts[r * 4 + c];
  }
  double chi2 = 0.0;
  for (int k : counts) chi2 += (k - draws / 16.0) * (k - draws / 16.0) / (draws / 16.0);
  EXPECT_LT(chi2, 30.58);  // 15 dof, p = 0.01

  // Without replacement: three draws from a 3-cell support are distinct.
  Heatmap three{2, 2, {0.5, 0.3, 0.2, 0.0}};
  for (int i = 0; i < 100; ++i) {
    const auto pts = heuristic_discover(three, 3, 4, rng).points;
    EXPECT_NE(pts[0], pts[1]);
    EXPECT_NE(pts[1], pts[2]);
    EXPECT_NE(pts[0], pts[2]);
  }
  Heatmap zero{2, 2, std::vector<double>(4, 0.0)};
  EXPECT_THROW(heuristic_discover(zero, 1, 4, rng), ContractError);
}

TEST(Heuristic, HeatmapFromMasks) {
  Bitmap b(8, 8);
  b.at(0, 0) = 1;
  b.at(5, 5) = 1;
  const auto h = heatmap_from_masks({rle_encode(b)}, 2, 2, 4);
  EXPECT_DOUBLE_EQ(h.probs[0], 0.5);
  EXPECT_DOUBLE_EQ(h.probs[3], 0.5);
  EXPECT_THROW(heatmap_from_masks({BinaryMask::empty(8, 8)}, 2, 2, 4), ContractError);
}

TEST(Sch, HeadsAndAsymmetry) {
  auto m = Model::create(small_config(), 10);
  std::mt19937_64 rng(11);
  const FeatureGrid g = random_grid(rng, 8, 8, 16, 4);
  const auto clip = small_clip(12);
  const auto mask = clip.entities[0].tube.masks[0];
  const Mat s = m->sch().classify_entity(g, mask, EntityHead::Subject);
  const Mat o = m->sch().classify_entity(g, mask, EntityHead::Object);
  EXPECT_EQ(s.cols(), 4);
  EXPECT_EQ(o.cols(), 5);
  EXPECT_EQ(s, m->sch().classify_entity(g, mask, EntityHead::Subject));
  const Mat a = random_grid(rng, 1, 1, 16, 1).values, b = random_grid(rng, 1, 1, 16, 1).values;
  const Mat ab = m->sch().classify_predicate(a, b);
  EXPECT_EQ(ab.cols(), 4);
  EXPECT_NE(ab, m->sch().classify_predicate(b, a));
  EXPECT_THROW(m->sch().classify_predicate(a, Mat::Zero(1, 3)), ContractError);
  EXPECT_NEAR(softmax_row(ab).sum(), 1.0, 1e-12);
}

TEST(Sch, AssembleTriplets) {
  const Mat subject = (Mat(1, 2) << 2.0, 0.0).finished();
  auto obj = [](int winner) {
    Mat m = Mat::Zero(1, 3);
    m(0, winner) = 3.0;
    return m;
  };
  auto pred = [](int winner, double strength) {
    Mat m = Mat::Zero(1, 3);
    m(0, winner) = strength;
    return m;
  };
  // All null objects -> no active predictions.
  auto none = assemble_triplets(subject, {obj(2), obj(2), obj(2)}, {pred(0, 1), pred(0, 1), pred(0, 1)}, 3);
  EXPECT_EQ(std::count_if(none.begin(), none.end(), [](const auto& t) { return t.active; }), 0);
  // One null -> two active, ordered by the product of max probabilities.
  auto two = assemble_triplets(subject, {obj(0), obj(2), obj(1)}, {pred(0, 1.0), pred(1, 1.0), pred(1, 4.0)}, 3);
  ASSERT_TRUE(two[0].active && two[1].active && !two[2].active);
  EXPECT_EQ(two[0].query, 2);
  EXPECT_EQ(two[1].query, 0);
  for (const auto& t : two) {
    auto mx = [](const Mat& l) {
      Mat e = (l.array() - l.maxCoeff()).exp().matrix();
      return e.maxCoeff() / e.sum();
    };
    EXPECT_NEAR(t.confidence, mx(t.subject_logits) * mx(t.object_logits) * mx(t.predicate_logits), 1e-12);
  }
  EXPECT_THROW(assemble_triplets(subject, {obj(0)}, {pred(0, 1)}, 3), ContractError);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  auto m = Model::create(small_config(), 13);
  const auto dir = std::filesystem::temp_directory_path() / "ivsg_ckpt_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(*m, dir / "a.ckpt", {{"step", 5}});
  nlohmann::json meta;
  auto back = load_checkpoint(dir / "a.ckpt", &meta);
  EXPECT_EQ(meta["step"], 5);
  EXPECT_EQ(back->config(), m->config());
  ASSERT_EQ(back->parameters().all().size(), m->parameters().all().size());
  for (std::size_t i = 0; i < m->parameters().all().size(); ++i)
    EXPECT_EQ(back->parameters().all()[i]->value, m->parameters().all()[i]->value);
  {
    std::ofstream f(dir / "b.ckpt", std::ios::binary);
    f << "IVCK";
  }
  EXPECT_THROW(load_checkpoint(dir / "b.ckpt"), FormatError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Model, FreezeFlagMarksBackbone) {
  auto c = small_config();
  c.freeze_backbone = true;
  auto m = Model::create(c, 1);
  for (const auto& p : m->parameters().all()) EXPECT_EQ(p->frozen, p->group == std::string(kBackboneGroup)) << p->name;
}
