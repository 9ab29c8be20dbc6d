#include "ivsg/nn/optim.hpp"

#include <cmath>
#include <numbers>

namespace ivsg::nn {

double Schedule::at(long step, long total_steps) const {
  if (kind == Kind::Constant || total_steps <= 1) return start;
  const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps - 1));
  return end + 0.5 * (start - end) * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(ParameterStore& store, std::map<std::string, Schedule> schedules, Schedule fallback, long total_steps,
             Options options)
    : store_(store),
      schedules_(std::move(schedules)),
      fallback_(fallback),
      total_steps_(total_steps),
      opt_(options) {
  for (const auto& p : store_.all())
    state_.push_back({Mat::Zero(p->value.rows(), p->value.cols()), Mat::Zero(p->value.rows(), p->value.cols())});
}

double AdamW::learning_rate(const std::string& group) const {
  auto it = schedules_.find(group);
  const Schedule& s = it == schedules_.end() ? fallback_ : it->second;
  return s.at(step_, total_steps_);
}

void AdamW::step() {
  double clip = 1.0;
  if (opt_.grad_clip > 0) {
    double sq = 0.0;
    for (const auto& p : store_.all())
      if (!p->frozen) sq += p->grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > opt_.grad_clip) clip = opt_.grad_clip / norm;
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
  const auto& params = store_.all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    if (p.frozen) continue;
    const double lr = learning_rate(p.group);
    auto& st = state_[i];
    const Mat g = p.grad * clip;
    st.m = opt_.beta1 * st.m + (1.0 - opt_.beta1) * g;
    st.v = opt_.beta2 * st.v + (1.0 - opt_.beta2) * g.cwiseProduct(g);
    p.value *= (1.0 - lr * opt_.weight_decay);
    p.value.array() -= lr * (st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + opt_.eps);
  }
}

}  // namespace ivsg::nn
