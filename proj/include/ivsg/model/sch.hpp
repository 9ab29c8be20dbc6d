#pragma once

#include <vector>

#include "ivsg/model/didm.hpp"

namespace ivsg::model {

enum class EntityHead { Subject, Object };

struct TripletPrediction {
  Mat subject_logits;    // 1×(object classes - 1), null excluded
  Mat object_logits;     // 1×object classes, null last
  Mat predicate_logits;  // 1×predicate classes, null last
  double confidence = 0.0;
  int subject_class = 0;
  int object_class = 0;
  int predicate_class = 0;
  bool active = false;
  int query = 0;  // index of the discovery query this triplet came from
};

class Sch {
 public:
  Sch(const ModelConfig& config, const nn::Builder& builder);

  int object_classes() const { return object_classes_; }
  int predicate_classes() const { return predicate_classes_; }
  int null_object() const { return object_classes_ - 1; }
  int null_predicate() const { return predicate_classes_ - 1; }

  Var classify_entity(Graph& g, Var features, const PoolWeights& pool, EntityHead head) const;
  Var classify_predicate(Graph& g, Var subject_token, Var object_token) const;

  Mat classify_entity(const FeatureGrid& features, const BinaryMask& mask, EntityHead head) const;
  /// Throws ContractError when the token widths differ from the model's.
  Mat classify_predicate(const Mat& subject_token, const Mat& object_token) const;

 private:
  int dim_ = 0;
  int object_classes_ = 0;
  int predicate_classes_ = 0;
  nn::Mlp subject_head_, object_head_, predicate_head_;
};

/// Row-wise softmax of a 1×n logit row.
Mat softmax_row(const Mat& logits);

/// Builds one prediction: argmaxes, active flag (object and predicate argmax
/// both non-null) and confidence = product of the three max probabilities.
TripletPrediction make_triplet(const Mat& subject_logits, const Mat& object_logits, const Mat& predicate_logits,
                               int query = 0);

/// One prediction per query. Active predictions come first in descending
/// confidence (ties by query index), followed by the inactive ones.
std::vector<TripletPrediction> assemble_triplets(const Mat& subject_logits, const std::vector<Mat>& object_logits,
                                                 const std::vector<Mat>& predicate_logits, int num_queries);

}  // namespace ivsg::model
