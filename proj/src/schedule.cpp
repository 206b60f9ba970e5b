#include "diff3m/schedule.hpp"

#include <cmath>
#include <string>

namespace diff3m {

NoiseSchedule::NoiseSchedule(int steps, double beta_start, double beta_end)
    : beta_start_(beta_start), beta_end_(beta_end) {
  if (steps < 1) throw ConfigError("noise schedule needs T >= 1, got " + std::to_string(steps));
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("noise schedule needs 0 < beta_start <= beta_end < 1, got " +
                      std::to_string(beta_start) + ", " + std::to_string(beta_end));
  }
  beta_.resize(static_cast<std::size_t>(steps));
  alpha_bar_.resize(beta_.size());
  double prod = 1.0;
  for (int t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
    beta_[static_cast<std::size_t>(t)] = beta_start + (beta_end - beta_start) * frac;
    prod *= 1.0 - beta_[static_cast<std::size_t>(t)];
    alpha_bar_[static_cast<std::size_t>(t)] = prod;
  }
}

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  return NoiseSchedule(steps, beta_start, beta_end);
}

Tensor forward_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  require_same_shape(x0.shape(), eps.shape(), "forward_noise");
  if (t < 0 || t >= sched.steps()) {
    throw ConfigError("forward_noise: step " + std::to_string(t) + " outside [0, " +
                      std::to_string(sched.steps()) + ")");
  }
  const double ab = sched.alpha_bar(t);
  return Tensor(x0.shape(), std::sqrt(ab) * x0.array() + std::sqrt(1.0 - ab) * eps.array());
}

Tensor ddim_transfer(const Tensor& x_src, const Tensor& eps_pred, double alpha_bar_from,
                     double alpha_bar_to) {
  require_same_shape(x_src.shape(), eps_pred.shape(), "ddim");
  const double from = std::sqrt(alpha_bar_from);
  const double to = std::sqrt(alpha_bar_to);
  return Tensor(x_src.shape(),
                to * (x_src.array() - std::sqrt(1.0 - alpha_bar_from) * eps_pred.array()) / from +
                    std::sqrt(1.0 - alpha_bar_to) * eps_pred.array());
}

Tensor ddim_encode_step(const Tensor& x_t, const Tensor& eps_pred, int t,
                        const NoiseSchedule& sched, int to) {
  if (to < 0) to = t + 1;
  if (t < 0 || to <= t || to >= sched.steps()) {
    throw ConfigError("ddim_encode_step: cannot encode from step " + std::to_string(t) +
                      " to " + std::to_string(to) + " with T = " + std::to_string(sched.steps()));
  }
  return ddim_transfer(x_t, eps_pred, sched.alpha_bar(t), sched.alpha_bar(to));
}

Tensor ddim_decode_step(const Tensor& x_src, const Tensor& eps_pred, int t,
                        const NoiseSchedule& sched, int to) {
  if (to < 0) to = t - 1;
  if (t < 1 || t >= sched.steps() || to < 0 || to >= t) {
    throw ConfigError("ddim_decode_step: cannot decode from step " + std::to_string(t) +
                      " to " + std::to_string(to) + " with T = " + std::to_string(sched.steps()));
  }
  return ddim_transfer(x_src, eps_pred, sched.alpha_bar(t), sched.alpha_bar(to));
}

std::vector<int> ddim_timesteps(int t_prime, int stride) {
  if (stride < 1) throw ConfigError("ddim stride must be >= 1, got " + std::to_string(stride));
  std::vector<int> steps;
  for (int t = 0; t < t_prime; t += stride) steps.push_back(t);
  steps.push_back(t_prime);
  return steps;
}

}  // namespace diff3m
