#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "icr/error.hpp"

namespace icr::lm {

// Linear warmup from 0 to peak over ceil(warmup_fraction * total_steps)
// steps, then cosine decay to 0 at total_steps.
struct LrSchedule {
  double peak_lr = 1e-3;
  double warmup_fraction = 0.03;
  std::size_t total_steps = 1;

  std::size_t warmup_steps() const {
    return static_cast<std::size_t>(std::ceil(warmup_fraction * static_cast<double>(total_steps)));
  }
};

inline double lr_at(std::size_t step, const LrSchedule& s) {
  require(s.warmup_fraction >= 0.0 && s.warmup_fraction < 1.0, ErrorKind::invalid_argument,
          "warmup_fraction must lie in [0, 1)");
  if (step > s.total_steps) fail(ErrorKind::invalid_argument, "step beyond total_steps");
  const std::size_t w = s.warmup_steps();
  if (step < w) return s.peak_lr * static_cast<double>(step) / static_cast<double>(w);
  const std::size_t decay = s.total_steps - w;
  if (decay == 0) return s.peak_lr;
  const double progress = static_cast<double>(step - w) / static_cast<double>(decay);
  return s.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

struct OptimizerState {
  std::vector<double> m, v;
  std::size_t step = 0;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  LrSchedule schedule;

  OptimizerState() = default;
  OptimizerState(std::size_t n, LrSchedule sched, double wd = 0.0)
      : m(n, 0.0), v(n, 0.0), weight_decay(wd), schedule(sched) {}
};

// One decoupled-weight-decay Adam update at lr_at(state.step); the step
// counter is incremented afterwards.
inline void adamw_step(std::span<double> params, std::span<const double> grads, OptimizerState& st) {
  require(params.size() == grads.size() && st.m.size() == params.size() && st.v.size() == params.size(),
          ErrorKind::shape_mismatch, "adamw_step: parameter, gradient and moment lengths differ");
  for (double g : grads) require(std::isfinite(g), ErrorKind::non_finite, "adamw_step: non-finite gradient");
  const double lr = lr_at(st.step, st.schedule);
  const double t = static_cast<double>(st.step + 1);
  const double bc1 = 1.0 - std::pow(st.beta1, t);
  const double bc2 = 1.0 - std::pow(st.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grads[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grads[i] * grads[i];
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    params[i] -= lr * st.weight_decay * params[i];
    params[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
  }
  ++st.step;
}

}  // namespace icr::lm
