#include "ivsg/model/sch.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "ivsg/core/error.hpp"

namespace ivsg::model {

Sch::Sch(const ModelConfig& config, const nn::Builder& b)
    : dim_(config.dim), object_classes_(config.object_classes), predicate_classes_(config.predicate_classes) {
  const std::array<int, 3> subject{dim_, config.class_hidden, object_classes_ - 1};
  const std::array<int, 3> object{dim_, config.class_hidden, object_classes_};
  const std::array<int, 3> predicate{2 * dim_, config.class_hidden, predicate_classes_};
  subject_head_ = nn::Mlp::create(b, "subject_head", subject);
  object_head_ = nn::Mlp::create(b, "object_head", object);
  predicate_head_ = nn::Mlp::create(b, "predicate_head", predicate);
}

Var Sch::classify_entity(Graph& g, Var features, const PoolWeights& pool, EntityHead head) const {
  if (!g.value(features).allFinite()) throw NumericalError("non-finite features given to classification");
  const Var pooled = g.matmul(g.constant(pool.weights), features);
  return head == EntityHead::Subject ? subject_head_(g, pooled) : object_head_(g, pooled);
}

Var Sch::classify_predicate(Graph& g, Var subject_token, Var object_token) const {
  if (g.value(subject_token).cols() != dim_ || g.value(object_token).cols() != dim_ ||
      g.value(subject_token).rows() != 1 || g.value(object_token).rows() != 1)
    throw ContractError("predicate head expects two 1×dim tokens");
  const std::array<Var, 2> pair{subject_token, object_token};
  return predicate_head_(g, g.concat_cols(pair));
}

Mat Sch::classify_entity(const FeatureGrid& features, const BinaryMask& mask, EntityHead head) const {
  Graph g(false);
  const PoolWeights p = pool_weights(mask, features.height, features.width, features.stride);
  return g.value(classify_entity(g, g.constant(features.values), p, head));
}

Mat Sch::classify_predicate(const Mat& subject_token, const Mat& object_token) const {
  Graph g(false);
  return g.value(classify_predicate(g, g.constant(subject_token), g.constant(object_token)));
}

Mat softmax_row(const Mat& logits) {
  Mat p = (logits.array() - logits.maxCoeff()).exp().matrix();
  return p / p.sum();
}

namespace {

std::pair<int, double> argmax_prob(const Mat& logits) {
  const Mat p = softmax_row(logits);
  Eigen::Index best = 0;
  const double v = p.row(0).maxCoeff(&best);
  return {static_cast<int>(best), v};
}

}  // namespace

TripletPrediction make_triplet(const Mat& subject_logits, const Mat& object_logits, const Mat& predicate_logits,
                               int query) {
  TripletPrediction t;
  t.subject_logits = subject_logits;
  t.object_logits = object_logits;
  t.predicate_logits = predicate_logits;
  t.query = query;
  const auto [s, ps] = argmax_prob(subject_logits);
  const auto [o, po] = argmax_prob(object_logits);
  const auto [r, pr] = argmax_prob(predicate_logits);
  t.subject_class = s;
  t.object_class = o;
  t.predicate_class = r;
  t.active = o != object_logits.cols() - 1 && r != predicate_logits.cols() - 1;
  t.confidence = ps * po * pr;
  return t;
}

std::vector<TripletPrediction> assemble_triplets(const Mat& subject_logits, const std::vector<Mat>& object_logits,
                                                 const std::vector<Mat>& predicate_logits, int num_queries) {
  if (static_cast<int>(object_logits.size()) != num_queries || static_cast<int>(predicate_logits.size()) != num_queries)
    throw ContractError("assemble_triplets needs exactly one object result per query");
  std::vector<TripletPrediction> out;
  for (int q = 0; q < num_queries; ++q)
    out.push_back(make_triplet(subject_logits, object_logits[q], predicate_logits[q], q));
  std::stable_sort(out.begin(), out.end(), [](const TripletPrediction& a, const TripletPrediction& b) {
    if (a.active != b.active) return a.active;
    return a.confidence > b.confidence;
  });
  return out;
}

}  // namespace ivsg::model
