#include <gtest/gtest.h>

#include "ivsg/core/error.hpp"
#include "ivsg/core/interchange.hpp"
#include "ivsg/pipeline/pipeline.hpp"
#include "fixtures.hpp"

using namespace ivsg;
using pipeline::PipelineConfig;

namespace {

VisualPrompt centroid_prompt(const synth::AnnotatedClip& clip, int entity) {
  const auto& tube = clip.entity(entity)->tube;
  return VisualPrompt::at_point(tube.t_start, centroid(rle_decode(tube.masks.front())));
}

PipelineConfig permissive() {
  PipelineConfig c;
  c.subject_confidence_floor = 0.0;
  return c;
}

}  // namespace

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    model_ = test_fixtures::small_trained_model();
    for (std::uint64_t s = 3; s < 8; ++s) clips_.push_back(synth::generate_clip(test_fixtures::small_scene(s)));
  }
  static void TearDownTestSuite() { model_.reset(); }
  static std::unique_ptr<model::Model> model_;
  static std::vector<synth::AnnotatedClip> clips_;
};
std::unique_ptr<model::Model> PipelineTest::model_;
std::vector<synth::AnnotatedClip> PipelineTest::clips_;

TEST(PipelineConfig, ValidationAndJsonRoundTrip) {
  PipelineConfig c;
  c.discovery_cadence = 2;
  c.link_iou_threshold = 0.3;
  EXPECT_EQ(pipeline::pipeline_config_from_json(pipeline::to_json(c)), c);
  c.discovery_cadence = 0;
  EXPECT_THROW(c.validate(), ContractError);
  c = {};
  c.subject_overlap_iou = 1.5;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST_F(PipelineTest, OutputsSatisfyTrackletInvariants) {
  int tracklets = 0;
  for (const auto& clip : clips_)
    for (int subject : clip.subject_entities()) {
      const auto r = pipeline::run(*model_, clip.frames, clip.vocabulary, centroid_prompt(clip, subject), permissive());
      ASSERT_TRUE(r.subject_found);
      EXPECT_EQ(r.subject_tube.t_start, 0);
      EXPECT_EQ(r.subject_tube.t_end, clip.frame_count() - 1);
      EXPECT_LE(static_cast<int>(r.graph.tracklets.size()), model_->config().num_queries);
      for (const auto& t : r.graph.tracklets) {
        EXPECT_NO_THROW(validate_tracklet(t, clip.vocabulary, clip.frame_count()));
        // One shared subject tube, restricted to each tracklet's window.
        for (int f = t.t_start(); f <= t.t_end(); ++f)
          EXPECT_EQ(t.subject_tube.at(f, clip.height(), clip.width()), r.subject_tube.at(f, clip.height(), clip.width()));
        EXPECT_GE(t.confidence, 0.0);
        EXPECT_LE(t.confidence, 1.0);
        ++tracklets;
      }
      for (std::size_t i = 1; i < r.graph.tracklets.size(); ++i)
        EXPECT_GE(r.graph.tracklets[i - 1].confidence, r.graph.tracklets[i].confidence);
      for (const auto& d : r.discoveries) {
        EXPECT_EQ(static_cast<int>(d.points.size()), model_->config().num_queries);
        for (const auto& p : d.points) {
          EXPECT_GE(p.x, 0.0);
          EXPECT_LE(p.x, 1.0);
          EXPECT_GE(p.y, 0.0);
          EXPECT_LE(p.y, 1.0);
        }
      }
    }
  EXPECT_GT(tracklets, 0);
}

TEST_F(PipelineTest, BitDeterministicAndSessionReuseMatchesFreshSession) {
  const auto& clip = clips_[0];
  const auto prompt = centroid_prompt(clip, clip.subject_entities()[0]);
  const auto a = pipeline::run(*model_, clip.frames, clip.vocabulary, prompt, permissive());
  model::BackboneSession session(model_->backbone(), clip.frames);
  const auto other = centroid_prompt(clip, clip.entities.back().id);
  pipeline::run(*model_, session, clip.vocabulary, other, permissive());
  const auto b = pipeline::run(*model_, session, clip.vocabulary, prompt, permissive());
  EXPECT_EQ(to_json(a.graph), to_json(b.graph));
  EXPECT_EQ(a.subject_tube, b.subject_tube);
  EXPECT_EQ(a.prompt_confidence, b.prompt_confidence);
}

TEST_F(PipelineTest, BlankFrameBackgroundPromptFindsNoSubject) {
  const auto& clip = clips_[0];
  std::vector<Image> blank(clip.frames.size(), Image{clip.height(), clip.width(), 3,
                                                     std::vector<float>(clip.frames[0].data.size(), 0.0f)});
  const auto r = pipeline::run(*model_, blank, clip.vocabulary, VisualPrompt::at_point(0, {0.5, 0.5}), PipelineConfig{});
  EXPECT_FALSE(r.subject_found);
  EXPECT_TRUE(r.graph.tracklets.empty());
  EXPECT_TRUE(r.discoveries.empty());
}

TEST_F(PipelineTest, DiscoveryCadence) {
  const auto& clip = clips_[1];
  PipelineConfig c = permissive();
  c.discovery_cadence = 2;
  auto prompt = centroid_prompt(clip, clip.subject_entities()[0]);
  const auto r = pipeline::run(*model_, clip.frames, clip.vocabulary, prompt, c);
  ASSERT_FALSE(r.discoveries.empty());
  for (const auto& d : r.discoveries) EXPECT_EQ(std::abs(d.frame - prompt.frame) % 2, 0);
  for (std::size_t i = 1; i < r.discoveries.size(); ++i) EXPECT_LT(r.discoveries[i - 1].frame, r.discoveries[i].frame);
}

TEST_F(PipelineTest, HeuristicSourceIsSeededAndNeedsAnRng) {
  const auto& clip = clips_[2];
  const auto prompt = centroid_prompt(clip, clip.subject_entities()[0]);
  std::vector<BinaryMask> masks;
  for (const auto& g : clip.ground_truth) masks.insert(masks.end(), g.object_tube.masks.begin(), g.object_tube.masks.end());
  const auto& mc = model_->config();
  const auto heatmap = model::heatmap_from_masks(masks, mc.grid_height(), mc.grid_width(), mc.stride());
  EXPECT_THROW(pipeline::run(*model_, clip.frames, clip.vocabulary, prompt, permissive(), {&heatmap, nullptr}),
               ContractError);
  std::mt19937_64 r1(4), r2(4);
  const auto a = pipeline::run(*model_, clip.frames, clip.vocabulary, prompt, permissive(), {&heatmap, &r1});
  const auto b = pipeline::run(*model_, clip.frames, clip.vocabulary, prompt, permissive(), {&heatmap, &r2});
  EXPECT_EQ(to_json(a.graph), to_json(b.graph));
  ASSERT_FALSE(a.discoveries.empty());
  for (const auto& d : a.discoveries)
    for (const auto& p : d.points) {
      const int r = std::min(static_cast<int>(p.y * heatmap.height), heatmap.height - 1);
      const int c = std::min(static_cast<int>(p.x * heatmap.width), heatmap.width - 1);
      EXPECT_GT(heatmap.probs[static_cast<std::size_t>(r * heatmap.width + c)], 0.0);
    }
}

TEST_F(PipelineTest, RejectsBadInputs) {
  const auto& clip = clips_[0];
  EXPECT_THROW(pipeline::run(*model_, clip.frames, clip.vocabulary, VisualPrompt::at_point(9, {0.5, 0.5}), permissive()),
               ContractError);
  Vocabulary other = clip.vocabulary;
  other.predicate_classes.insert(other.predicate_classes.begin(), "extra");
  EXPECT_THROW(pipeline::run(*model_, clip.frames, other, VisualPrompt::at_point(0, {0.5, 0.5}), permissive()),
               ContractError);
}

TEST_F(PipelineTest, ActivityFloorDropsLowConfidenceTriplets) {
  const auto& clip = clips_[3];
  const auto prompt = centroid_prompt(clip, clip.subject_entities()[0]);
  PipelineConfig c = permissive();
  c.activity_confidence_floor = 1.0;
  const auto r = pipeline::run(*model_, clip.frames, clip.vocabulary, prompt, c);
  for (const auto& t : r.graph.tracklets) EXPECT_GE(t.confidence, 1.0);
}
