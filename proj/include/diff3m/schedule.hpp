#pragma once

#include <vector>

#include "diff3m/tensor.hpp"

namespace diff3m {

/// Linear beta schedule with precomputed cumulative products.
///
/// Steps are 0-based table indices: alpha_bar(t) = prod_{s <= t} (1 - beta(s)),
/// so index t corresponds to step t+1 of the usual 1-based notation. Detection
/// places the clean input at index 0 and every DDIM transition moves between
/// table entries.
class NoiseSchedule {
 public:
  NoiseSchedule(int steps, double beta_start, double beta_end);

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }
  double beta(int t) const { return beta_.at(static_cast<std::size_t>(t)); }
  double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
  const std::vector<double>& betas() const { return beta_; }
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }

 private:
  double beta_start_;
  double beta_end_;
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
};

/// Default desk-scale schedule: T = 1000, beta from 1e-4 to 0.02.
NoiseSchedule make_schedule(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
Tensor forward_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);

/// Deterministic DDIM transfer between two noise levels sharing one noise
/// estimate: x_to = sqrt(ab_to) (x_src - sqrt(1 - ab_from) eps) / sqrt(ab_from)
///                  + sqrt(1 - ab_to) eps.
Tensor ddim_transfer(const Tensor& x_src, const Tensor& eps_pred, double alpha_bar_from,
                     double alpha_bar_to);

/// DDIM encode from t to `to` (default t+1); `to` must be in (t, T).
Tensor ddim_encode_step(const Tensor& x_t, const Tensor& eps_pred, int t,
                        const NoiseSchedule& sched, int to = -1);

/// DDIM decode from t to `to` (default t-1); t >= 1 and `to` in [0, t).
Tensor ddim_decode_step(const Tensor& x_src, const Tensor& eps_pred, int t,
                        const NoiseSchedule& sched, int to = -1);

/// Strided step sequence 0, stride, 2*stride, ..., t_prime (t_prime always last).
std::vector<int> ddim_timesteps(int t_prime, int stride);

}  // namespace diff3m
