#include "ivsg/train/objective.hpp"

#include <algorithm>
#include <cmath>

#include "ivsg/core/error.hpp"
#include "ivsg/train/sampler.hpp"

namespace ivsg::train {

using model::EncodedFrame;
using model::EntityHead;
using model::SegmentationVars;
using nn::Mat;

VisualPrompt make_prompt(PromptKind kind, int frame, const BinaryMask& mask, std::mt19937_64& rng) {
  switch (kind) {
    case PromptKind::Point: return VisualPrompt::at_point(frame, sample_gt_point(mask, rng));
    case PromptKind::Box: return VisualPrompt::with_box(frame, tight_box(mask));
    case PromptKind::Mask: return VisualPrompt::with_mask(frame, mask);
  }
  throw ContractError("unknown prompt kind");
}

Episode make_episode(const synth::AnnotatedClip& clip, int subject, PromptKind kind, int window, double negative_prob,
                     std::mt19937_64& rng) {
  const EntityRecord* entity = clip.entity(subject);
  if (!entity) throw ContractError("subject entity " + std::to_string(subject) + " not in clip");
  const int frames = clip.frame_count();
  window = std::clamp(window, 1, frames);
  Episode e;
  e.clip = &clip;
  e.subject = subject;
  e.subject_class = entity->object_class;
  const int start = std::uniform_int_distribution<int>(0, frames - window)(rng);
  for (int t = start; t < start + window; ++t) e.frames.push_back(t);

  std::vector<int> visible;
  for (int t : e.frames)
    if (!entity->tube.at(t, clip.height(), clip.width()).is_empty()) visible.push_back(t);
  if (visible.empty()) throw ContractError("subject is not visible in the sampled window");
  const int t0 = visible[std::uniform_int_distribution<std::size_t>(0, visible.size() - 1)(rng)];
  e.prompt = make_prompt(kind, t0, entity->tube.at(t0, clip.height(), clip.width()), rng);

  for (int t : e.frames) {
    std::vector<Episode::Target> per;
    for (const auto& gt : clip.ground_truth) {
      if (gt.subject_entity != subject || !gt.subject_tube.covers(t)) continue;
      const auto mask = gt.object_tube.at(t, clip.height(), clip.width());
      if (mask.is_empty()) continue;
      per.push_back({gt.object_entity, gt.object_class, gt.predicate_class, sample_gt_point(mask, rng)});
    }
    e.targets.push_back(std::move(per));
  }

  if (std::bernoulli_distribution(negative_prob)(rng)) {
    const int t = e.frames[std::uniform_int_distribution<std::size_t>(0, e.frames.size() - 1)(rng)];
    Bitmap occupied(clip.height(), clip.width());
    for (const auto& ent : clip.entities) {
      const Bitmap b = rle_decode(ent.tube.at(t, clip.height(), clip.width()));
      for (std::size_t i = 0; i < b.data.size(); ++i) occupied.data[i] |= b.data[i];
    }
    // Background pixels at least two pixels from any entity.
    std::vector<std::size_t> free;
    for (int r = 0; r < clip.height(); ++r)
      for (int c = 0; c < clip.width(); ++c) {
        bool clear = true;
        for (int dr = -2; dr <= 2 && clear; ++dr)
          for (int dc = -2; dc <= 2 && clear; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr >= 0 && rr < clip.height() && cc >= 0 && cc < clip.width() && occupied.at(rr, cc)) clear = false;
          }
        if (clear) free.push_back(static_cast<std::size_t>(r) * clip.width() + c);
      }
    if (!free.empty()) {
      const std::size_t i = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
      e.negative = VisualPrompt::at_point(
          t, pixel_center(static_cast<int>(i) / clip.width(), static_cast<int>(i) % clip.width(), clip.height(),
                          clip.width()));
    }
  }
  return e;
}

namespace {

Mat mask_column(const BinaryMask& m) {
  const Bitmap b = rle_decode(m);
  Mat out(static_cast<Eigen::Index>(b.data.size()), 1);
  for (std::size_t i = 0; i < b.data.size(); ++i) out(static_cast<Eigen::Index>(i), 0) = b.data[i];
  return out;
}

BinaryMask binarize(const Graph& g, Var logits, int height, int width) {
  const Mat& v = g.value(logits);
  Bitmap b(height, width);
  for (Eigen::Index i = 0; i < v.size(); ++i) b.data[static_cast<std::size_t>(i)] = v.data()[i] > 0.0;
  return rle_encode(b);
}

// Running mean of scalar graph values.
struct Accumulator {
  Var sum;
  double weight = 0.0;

  void add(Graph& g, Var v, double w = 1.0) {
    Var term = w == 1.0 ? v : g.scale(v, w);
    sum = sum.valid() ? g.add(sum, term) : term;
    weight += w;
  }
  Var mean(Graph& g) const { return weight > 0.0 ? g.scale(sum, 1.0 / weight) : g.scalar_constant(0.0); }
};

class StepBuilder {
 public:
  StepBuilder(Graph& g, const model::Model& m, const Episode& e, const ObjectiveOptions& o, Decisions& d)
      : g_(g), m_(m), e_(e), o_(o), d_(d), h_(e.clip->height()), w_(e.clip->width()) {}

  LossTerms run() {
    const auto& clip = *e_.clip;
    if (clip.vocabulary.num_objects() != m_.config().object_classes ||
        clip.vocabulary.num_predicates() != m_.config().predicate_classes)
      throw ContractError("clip vocabulary does not match the model");
    const auto& backbone = m_.backbone();

    std::vector<EncodedFrame> enc;
    for (int t : e_.frames) enc.push_back(backbone.encode(g_, clip.frames[static_cast<std::size_t>(t)]));
    const int n = static_cast<int>(e_.frames.size());
    const int k0 = static_cast<int>(std::find(e_.frames.begin(), e_.frames.end(), e_.prompt.frame) - e_.frames.begin());
    if (k0 == n) throw ContractError("prompt frame outside the episode window");

    // Subject: prompt frame, then propagation outward in both directions.
    std::vector<SegmentationVars> subject(n);
    std::vector<BinaryMask> subject_pool(n);
    auto subject_step = [&](int k, const VisualPrompt& prompt) {
      const auto gt = subject_gt(k);
      subject[k] = backbone.segment(g_, enc[k], prompt);
      add_mask_loss(subject[k], gt);
      subject_pool[k] = teacher(binarize(g_, subject[k].logits, h_, w_), gt);
    };
    subject_step(k0, e_.prompt);
    for (int k = k0 + 1; k < n; ++k)
      subject_step(k, VisualPrompt::with_mask(e_.frames[k], teacher(subject_pool[k - 1], subject_gt(k - 1))));
    for (int k = k0 - 1; k >= 0; --k)
      subject_step(k, VisualPrompt::with_mask(e_.frames[k], teacher(subject_pool[k + 1], subject_gt(k + 1))));

    const auto& grid = enc[0];
    const int null_obj = m_.sch().null_object(), null_rel = m_.sch().null_predicate();
    for (int k = 0; k < n; ++k) {
      const auto pool = model::pool_weights(subject_pool[k], grid.grid_height, grid.grid_width, grid.stride);
      sub_.add(g_, g_.cross_entropy(m_.sch().classify_entity(g_, enc[k].features, pool, EntityHead::Subject),
                                     e_.subject_class));

      const Var token = m_.didm().subject_token(g_, enc[k].features, pool);
      const auto disc = m_.didm().discover(g_, enc[k].features, grid.grid_height, grid.grid_width, token, &pool);
      const int nq = m_.didm().config().num_queries;

      // Every query segmented at its own (detached) point.
      std::vector<Var> q_obj(nq), q_rel(nq);
      std::vector<Point2> q_pt(nq);
      for (int q = 0; q < nq; ++q) {
        const Mat& pv = g_.value(disc.points);
        q_pt[q] = d_.take(Point2{std::clamp(pv(q, 0), 0.0, 1.0), std::clamp(pv(q, 1), 0.0, 1.0)});
        const auto seg = backbone.segment(g_, enc[k], VisualPrompt::at_point(e_.frames[k], q_pt[q]));
        const auto qmask = d_.take(binarize(g_, seg.logits, h_, w_));
        const auto qpool = model::pool_weights(qmask, grid.grid_height, grid.grid_width, grid.stride);
        q_obj[q] = m_.sch().classify_entity(g_, enc[k].features, qpool, EntityHead::Object);
        q_rel[q] = m_.sch().classify_predicate(g_, subject[k].object_token, seg.object_token);
      }

      const auto& targets = e_.targets[k];
      std::vector<std::vector<double>> cost(targets.size(), std::vector<double>(nq));
      for (std::size_t t = 0; t < targets.size(); ++t)
        for (int q = 0; q < nq; ++q)
          cost[t][q] = match_cost(targets[t].point, q_pt[q], g_.value(q_obj[q]), targets[t].object_class,
                                  g_.value(q_rel[q]), targets[t].predicate, o_.match_weights);
      const MatchResult match = d_.take(hungarian_match(cost));

      for (std::size_t t = 0; t < targets.size(); ++t) {
        const auto& target = targets[t];
        const int q = match.assignment[t];
        ++matched_;
        const Var target_pt = g_.constant((Mat(1, 2) << target.point.x, target.point.y).finished());
        l2_.add(g_, g_.squared_norm(g_.sub(g_.slice_rows(disc.points, q, 1), target_pt)));

        // Teacher forcing: the object is segmented from its ground-truth point.
        const auto gt = clip.entity(target.object_entity)->tube.at(e_.frames[k], h_, w_);
        const auto seg = backbone.segment(g_, enc[k], VisualPrompt::at_point(e_.frames[k], target.point));
        add_mask_loss(seg, gt);
        const auto omask = teacher(binarize(g_, seg.logits, h_, w_), gt);
        const auto opool = model::pool_weights(omask, grid.grid_height, grid.grid_width, grid.stride);
        obj_.add(g_, g_.cross_entropy(m_.sch().classify_entity(g_, enc[k].features, opool, EntityHead::Object),
                                       target.object_class));
        rel_.add(g_, g_.cross_entropy(m_.sch().classify_predicate(g_, subject[k].object_token, seg.object_token),
                                       target.predicate));
      }
      for (int q : match.unmatched_queries) {
        ++unmatched_;
        obj_.add(g_, g_.cross_entropy(q_obj[q], null_obj), o_.unmatched_weight);
        rel_.add(g_, g_.cross_entropy(q_rel[q], null_rel), o_.unmatched_weight);
      }
    }

    if (e_.negative) {
      const int k = static_cast<int>(std::find(e_.frames.begin(), e_.frames.end(), e_.negative->frame) - e_.frames.begin());
      if (k == n) throw ContractError("negative prompt outside the episode window");
      add_mask_loss(backbone.segment(g_, enc[k], *e_.negative), BinaryMask::empty(h_, w_));
    }

    LossTerms terms;
    terms.bce = bce_.mean(g_);
    terms.dice = dice_.mean(g_);
    terms.iou = iou_.mean(g_);
    terms.l2 = l2_.mean(g_);
    terms.sub = sub_.mean(g_);
    terms.obj = obj_.mean(g_);
    terms.rel = rel_.mean(g_);
    terms.masks = static_cast<int>(bce_.weight);
    terms.matched = matched_;
    terms.unmatched = unmatched_;
    return terms;
  }

 private:
  BinaryMask subject_gt(int k) const { return e_.clip->entity(e_.subject)->tube.at(e_.frames[k], h_, w_); }

  BinaryMask teacher(const BinaryMask& predicted, const BinaryMask& gt) {
    return d_.take(mask_iou(predicted, gt) < o_.teacher_iou ? gt : predicted);
  }

  void add_mask_loss(const SegmentationVars& seg, const BinaryMask& gt) {
    const Mat target = mask_column(gt);
    bce_.add(g_, g_.bce_with_logits(seg.logits, target));
    dice_.add(g_, g_.soft_dice(seg.logits, target));
    const double iou = gt.is_empty() ? 0.0 : mask_iou(binarize(g_, seg.logits, h_, w_), gt);
    iou_.add(g_, g_.squared_norm(g_.affine(seg.confidence, 1.0, -d_.take(iou))));
  }

  Graph& g_;
  const model::Model& m_;
  const Episode& e_;
  const ObjectiveOptions& o_;
  Decisions& d_;
  int h_, w_;
  Accumulator bce_, dice_, iou_, l2_, sub_, obj_, rel_;
  int matched_ = 0, unmatched_ = 0;
};

}  // namespace

LossTerms episode_terms(Graph& g, const model::Model& model, const Episode& episode, const ObjectiveOptions& options,
                        Decisions& decisions) {
  if (!episode.clip) throw ContractError("episode has no clip");
  StepBuilder b(g, model, episode, options, decisions);
  return b.run();
}

nlohmann::json LossBreakdown::to_json() const {
  return {{"bce", bce}, {"dice", dice}, {"iou", iou}, {"l2", l2},
          {"sub", sub}, {"obj", obj},   {"rel", rel}, {"total", total}};
}

TotalLoss total_loss(Graph& g, const LossTerms& t, const LossWeights& w) {
  w.validate();
  const std::pair<const char*, std::pair<Var, double>> parts[] = {
      {"bce", {t.bce, w.bce}}, {"dice", {t.dice, w.dice}}, {"iou", {t.iou, w.iou}}, {"l2", {t.l2, w.l2}},
      {"sub", {t.sub, w.sub}}, {"obj", {t.obj, w.obj}},   {"rel", {t.rel, w.rel}}};
  TotalLoss out;
  double* slots[] = {&out.breakdown.bce, &out.breakdown.dice, &out.breakdown.iou, &out.breakdown.l2,
                     &out.breakdown.sub, &out.breakdown.obj,  &out.breakdown.rel};
  Var total;
  for (std::size_t i = 0; i < std::size(parts); ++i) {
    const auto& [name, vw] = parts[i];
    const double value = g.scalar(vw.first);
    if (!std::isfinite(value)) throw NumericalError(std::string("non-finite loss term '") + name + "'");
    *slots[i] = value;
    const Var term = g.scale(vw.first, vw.second);
    total = total.valid() ? g.add(total, term) : term;
  }
  out.total = total;
  out.breakdown.total = g.scalar(total);
  return out;
}

}  // namespace ivsg::train
