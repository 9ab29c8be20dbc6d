#pragma once

#include <map>
#include <string>
#include <vector>

#include "ivsg/nn/graph.hpp"

namespace ivsg::nn {

/// Learning-rate schedule of one parameter group.
struct Schedule {
  enum class Kind { Constant, Cosine } kind = Kind::Constant;
  double start = 1e-3;
  double end = 1e-3;  // cosine only

  double at(long step, long total_steps) const;
};

/// AdamW (decoupled weight decay). Parameters are grouped by
/// Parameter::group; groups without a schedule use `fallback`.
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    double grad_clip = 1.0;  // global L2 norm; <= 0 disables
  };

  AdamW(ParameterStore& store, std::map<std::string, Schedule> schedules, Schedule fallback, long total_steps,
        Options options);

  /// Applies one update from the gradients currently held in the store.
  void step();
  long steps_taken() const { return step_; }
  double learning_rate(const std::string& group) const;

 private:
  struct State {
    Mat m;
    Mat v;
  };
  ParameterStore& store_;
  std::map<std::string, Schedule> schedules_;
  Schedule fallback_;
  long total_steps_;
  Options opt_;
  long step_ = 0;
  std::vector<State> state_;
};

}  // namespace ivsg::nn
