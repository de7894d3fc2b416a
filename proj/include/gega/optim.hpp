#pragma once

// Adam with global-norm clipping and a linear warmup / linear decay schedule.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "gega/params.hpp"
#include "gega/tensor.hpp"

namespace gega {

struct AdamConfig {
  double lr = 5e-5;
  double lr_added = 0.0;  // rate for parameters outside the encoder prefix
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double max_grad_norm = 1.0;
  double warmup_ratio = 0.06;
  std::size_t total_steps = 0;  // 0 disables the schedule (constant rate)
};

// Scales every rate linearly up over the warmup steps, then linearly down
// to zero at total_steps. step is 1-based.
inline double schedule_scale(const AdamConfig& cfg, std::size_t step) {
  if (cfg.total_steps == 0) return 1.0;
  const double warm =
      std::max(1.0, cfg.warmup_ratio * static_cast<double>(cfg.total_steps));
  const double s = static_cast<double>(step);
  if (s <= warm) return s / warm;
  const double total = static_cast<double>(cfg.total_steps);
  if (s >= total) return 0.0;
  return (total - s) / (total - warm);
}

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  std::size_t step_count() const { return step_; }
  double last_scale() const { return schedule_scale(cfg_, step_); }

  // Clips gradients to the configured global norm and returns the norm
  // measured before clipping.
  double clip_gradients(ParamStore& params) const {
    double sq = 0.0;
    for (auto& [name, p] : params) {
      if (!p.requires_grad()) continue;
      for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (cfg_.max_grad_norm > 0.0 && norm > cfg_.max_grad_norm) {
      const double scale = cfg_.max_grad_norm / norm;
      for (auto& [name, p] : params) {
        if (!p.requires_grad()) continue;
        for (double& g : p.grad()) g *= scale;
      }
    }
    return norm;
  }

  // One update over every parameter that carries gradients.
  void step(ParamStore& params) {
    ++step_;
    const double scale = schedule_scale(cfg_, step_);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto& [name, p] : params) {
      if (!p.requires_grad()) continue;
      const double rate = scale * rate_for(name);
      State& st = state_[name];
      auto& vals = p.values();
      auto& grad = p.grad();
      if (st.m.empty()) {
        st.m.assign(vals.size(), 0.0);
        st.v.assign(vals.size(), 0.0);
      }
      for (std::size_t i = 0; i < vals.size(); ++i) {
        st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * grad[i];
        st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        vals[i] -= rate * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  struct State {
    std::vector<double> m, v;
  };

  double rate_for(const std::string& name) const {
    if (cfg_.lr_added <= 0.0) return cfg_.lr;
    return name.rfind("encoder.", 0) == 0 ? cfg_.lr : cfg_.lr_added;
  }

  AdamConfig cfg_;
  std::size_t step_ = 0;
  std::map<std::string, State> state_;
};

}  // namespace gega
