#include <random>

#include <gtest/gtest.h>

#include "ivsg/core/error.hpp"
#include "ivsg/metrics/metrics.hpp"
#include "ivsg/synth/dataset.hpp"
#include "metric_oracle.hpp"

using namespace ivsg;
using namespace ivsg::metrics;

namespace {

using metric_oracle::kH;
using metric_oracle::kW;
using metric_oracle::triplet;

// One-frame tube holding the listed pixels (row-major indices).
MaskTube tube(std::initializer_list<int> pixels, int t = 0) {
  Bitmap b(kH, kW);
  for (int p : pixels) b.data[static_cast<std::size_t>(p)] = 1;
  return {t, t, {rle_encode(b)}};
}

Point2 center_of(int pixel) { return {(pixel % kW + 0.5) / kW, (pixel / kW + 0.5) / kH}; }

}  // namespace

TEST(RecallAtK, IdenticalPredictionsScoreOne) {
  const std::vector gt{triplet(0, 1, 0, tube({0, 1}), tube({10, 11})), triplet(0, 2, 1, tube({0, 1}), tube({14}))};
  EXPECT_DOUBLE_EQ(recall_at_k(gt, gt, 3, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(spir(gt, gt, 0.5), 1.0);
}

TEST(RecallAtK, OneCorrectAndTwoWrongPredicates) {
  const std::vector gt{triplet(0, 1, 0, tube({0, 1}), tube({10, 11})), triplet(0, 2, 1, tube({0, 1}), tube({14}))};
  const std::vector pred{triplet(0, 1, 0, tube({0, 1}), tube({10, 11}), 0.9),
                         triplet(0, 2, 0, tube({0, 1}), tube({14}), 0.8),
                         triplet(0, 1, 2, tube({0, 1}), tube({10, 11}), 0.7)};
  EXPECT_DOUBLE_EQ(recall_at_k(pred, gt, 3, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(spir(pred, gt, 0.5), 1.0);
}

TEST(RecallAtK, ObjectIouBelowThresholdContributesNothing) {
  const std::vector gt{triplet(0, 1, 0, tube({0}), tube({4, 5, 6, 7, 8}))};
  const std::vector pred{triplet(0, 1, 0, tube({0}), tube({4, 5}))};  // IoU 0.4
  EXPECT_DOUBLE_EQ(recall_at_k(pred, gt, 3, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(recall_at_k(pred, gt, 3, 0.4), 1.0);
}

TEST(RecallAtK, OnlyTopKCountAndEmptyGroundTruthIsOne) {
  const std::vector gt{triplet(0, 1, 0, tube({0}), tube({5}))};
  std::vector pred{triplet(0, 1, 1, tube({0}), tube({5}), 0.9), triplet(0, 1, 0, tube({0}), tube({5}), 0.8)};
  EXPECT_DOUBLE_EQ(recall_at_k(pred, gt, 1, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(recall_at_k(pred, gt, 2, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(recall_at_k(pred, {}, 3, 0.5), 1.0);
  EXPECT_THROW(recall_at_k(pred, gt, 0, 0.5), ContractError);
}

TEST(Spir, LabelsIgnoredAndThresholdInclusive) {
  const std::vector gt{triplet(0, 1, 0, tube({0, 1}), tube({8, 9}))};
  const std::vector wrong_labels{triplet(3, 2, 2, tube({0, 1}), tube({8, 9}))};
  EXPECT_DOUBLE_EQ(spir(wrong_labels, gt, 0.5), 1.0);
  const std::vector half{triplet(0, 1, 0, tube({0}), tube({9}))};  // both IoUs exactly 0.5
  EXPECT_DOUBLE_EQ(spir(half, gt, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(recall_at_k(half, gt, 3, 0.5), 1.0);
}

TEST(Spir, OneOfTwoPairsMatched) {
  const std::vector gt{triplet(0, 1, 0, tube({0}), tube({5})), triplet(0, 1, 0, tube({0}), tube({15}))};
  const std::vector pred{triplet(0, 1, 0, tube({0}), tube({5})), triplet(0, 1, 0, tube({0}), tube({5}))};
  EXPECT_DOUBLE_EQ(spir(pred, gt, 0.5), 0.5);
}

TEST(Matching, LaterPredictionCanTakeOverViaAugmentingPath) {
  // p0 fits both ground truths, p1 only the first; a greedy first-fit would
  // stop at one match.
  const std::vector gt{triplet(0, 1, 0, tube({0}), tube({5, 6})), triplet(0, 1, 0, tube({0}), tube({6, 7}))};
  const std::vector pred{triplet(0, 1, 0, tube({0}), tube({6}), 0.9), triplet(0, 1, 0, tube({0}), tube({5, 6}), 0.8)};
  EXPECT_DOUBLE_EQ(spir(pred, gt, 0.5), 1.0);
}

TEST(Plr, HandExamples) {
  Bitmap a(kH, kW), b(kH, kW);
  a.at(0, 0) = a.at(0, 1) = 1;
  b.at(3, 3) = 1;
  const PlrFrame centered{{centroid(a), centroid(b)}, {rle_encode(a), rle_encode(b)}};
  EXPECT_DOUBLE_EQ(*plr_frame(centered), 1.0);
  const PlrFrame background{{center_of(10), center_of(5)}, {rle_encode(a), rle_encode(b)}};
  EXPECT_DOUBLE_EQ(*plr_frame(background), 0.0);
  // Three points, two objects: the point at a's pixel pairs with a, the
  // background point nearest b pairs with b.
  const PlrFrame three{{center_of(0), center_of(11), center_of(8)}, {rle_encode(a), rle_encode(b)}};
  EXPECT_DOUBLE_EQ(*plr_frame(three), 0.5);
  EXPECT_FALSE(plr_frame({{center_of(0)}, {}}).has_value());
  EXPECT_DOUBLE_EQ(*plr_frame({{}, {rle_encode(a)}}), 0.0);
  EXPECT_DOUBLE_EQ(*plr({centered, background, {{center_of(0)}, {}}}), 0.5);
  EXPECT_FALSE(plr({}).has_value());
}

TEST(Plr, IndependentOfClassPredictions) {
  // The signature takes no labels at all; PLR of identical geometry is
  // identical no matter what the classifier said.
  Bitmap a(kH, kW);
  a.at(1, 1) = 1;
  const PlrFrame f{{center_of(5)}, {rle_encode(a)}};
  EXPECT_DOUBLE_EQ(*plr_frame(f), 1.0);
}

TEST(MetricOracle, AgreesWithBruteForceEvaluator) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 500; ++trial) ASSERT_EQ(metric_oracle::check_random_instance(rng), "") << "trial " << trial;
}

TEST(EvalConfig, Validation) {
  EvalConfig c;
  EXPECT_NO_THROW(c.validate());
  c.tau = 0.0;
  EXPECT_THROW(c.validate(), ContractError);
  c = {};
  c.runs = 0;
  EXPECT_THROW(c.validate(), ContractError);
}

namespace {

struct Protocol : ::testing::Test {
  static void SetUpTestSuite() {
    synth::SceneConfig s;
    s.frames = 3;
    s.height = s.width = 24;
    s.max_interactions_per_subject = 1;
    s.min_extent = 3;
    s.max_extent = 4;
    s.near_radius = 13.0;
    s.margin = 1.5;
    s.max_retries = 5000;
    s.seed = 8;
    clips_ = synth::generate_clips(s, 3);
    model::ModelConfig c;
    c.image_height = c.image_width = 24;
    c.object_classes = s.vocabulary().num_objects();
    c.predicate_classes = s.vocabulary().num_predicates();
    c.hires_channels = 3;
    c.mid_channels = 4;
    c.dim = 4;
    c.heads = 2;
    c.decoder_layers = 1;
    c.mlp_hidden = 6;
    c.upscale_channels = 2;
    c.num_queries = 3;
    c.discovery_layers = 1;
    c.point_head_hidden = 4;
    c.class_hidden = 6;
    model_ = model::Model::create(c, 4);
  }
  static void TearDownTestSuite() { model_.reset(); }

  static pipeline::PipelineConfig permissive() {
    pipeline::PipelineConfig p;
    p.subject_confidence_floor = 0.0;
    return p;
  }

  static std::vector<synth::AnnotatedClip> clips_;
  static std::unique_ptr<model::Model> model_;
};
std::vector<synth::AnnotatedClip> Protocol::clips_;
std::unique_ptr<model::Model> Protocol::model_;

}  // namespace

TEST_F(Protocol, DeterministicForFixedSeeds) {
  EvalConfig c;
  c.runs = 4;
  c.seed = 3;
  const auto a = robustness_protocol(*model_, clips_, c, permissive());
  const auto b = robustness_protocol(*model_, clips_, c, permissive());
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.to_table(), b.to_table());
  EXPECT_EQ(a.runs.size(), 4u);
  for (const auto& r : a.runs) {
    EXPECT_LE(r.recall_at_k, r.spir);
    for (double v : {r.recall_at_k, r.spir, r.plr}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST_F(Protocol, SingleRunAndDeterministicPromptsHaveZeroStd) {
  EvalConfig c;
  c.runs = 1;
  const auto one = robustness_protocol(*model_, clips_, c, permissive());
  EXPECT_EQ(one.recall_at_k.std, 0.0);
  EXPECT_EQ(one.spir.std, 0.0);
  EXPECT_EQ(one.plr.std, 0.0);
  for (PromptKind kind : {PromptKind::Box, PromptKind::Mask}) {
    c.runs = 5;
    c.prompt = kind;
    const auto r = robustness_protocol(*model_, clips_, c, permissive());
    EXPECT_EQ(r.effective_runs, 1);
    EXPECT_EQ(r.plr.std, 0.0);
    const std::string table = r.to_table();
    EXPECT_EQ(table.find("±") == std::string::npos, kind == PromptKind::Mask) << table;
  }
  c.prompt = PromptKind::Point;
  EXPECT_NE(robustness_protocol(*model_, clips_, c, permissive()).to_table().find("±"), std::string::npos);
}

TEST_F(Protocol, PopulationStdOverRuns) {
  EvalConfig c;
  c.runs = 6;
  c.seed = 11;
  const auto r = robustness_protocol(*model_, clips_, c, permissive());
  double mean = 0, var = 0;
  for (const auto& run : r.runs) mean += run.spir;
  mean /= 6;
  for (const auto& run : r.runs) var += (run.spir - mean) * (run.spir - mean);
  EXPECT_NEAR(r.spir.mean, mean, 1e-12);
  EXPECT_NEAR(r.spir.std, std::sqrt(var / 6), 1e-12);
  const auto j = r.to_json();
  for (const char* key : {"recall_at_k", "spir", "plr"}) {
    EXPECT_TRUE(j[key].contains("mean"));
    EXPECT_TRUE(j[key].contains("std"));
  }
}

TEST_F(Protocol, HeuristicNeedsAHeatmap) {
  EvalConfig c;
  c.runs = 1;
  c.discovery = DiscoveryMode::Heuristic;
  EXPECT_THROW(robustness_protocol(*model_, clips_, c, permissive()), ContractError);
  const auto h = object_heatmap(clips_, model_->config());
  const auto a = robustness_protocol(*model_, clips_, c, permissive(), &h);
  const auto b = robustness_protocol(*model_, clips_, c, permissive(), &h);
  EXPECT_EQ(a.to_json(), b.to_json());
}
