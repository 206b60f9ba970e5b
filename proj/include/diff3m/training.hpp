#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "diff3m/adam.hpp"
#include "diff3m/networks.hpp"
#include "diff3m/pcm.hpp"
#include "diff3m/schedule.hpp"
#include "diff3m/synthdata.hpp"

namespace diff3m {

enum class Phase {
  pretrain,  // noise-prediction loss only (NP + IECA)
  joint,     // full weighted loss
};

std::string to_string(Phase phase);
Phase parse_phase(const std::string& text);

struct TrainConfig {
  int steps_T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double lambda = 0.5;
  double learning_rate = 1e-4;
  std::size_t batch_size = 8;
  std::size_t iterations = 2000;
  std::uint64_t seed = 0;
  Phase phase = Phase::joint;
  ModelConfig model;

  /// Throws ConfigError on lambda outside (0,1) or non-positive counts.
  void validate() const;
  NoiseSchedule schedule() const { return NoiseSchedule(steps_T, beta_start, beta_end); }
};

/// lambda * mse(eps_pred, eps) + (1 - lambda) * mse(x_tilde, x_t).
Var diff3m_loss(Var eps_pred, Var eps, Var x_tilde, Var x_t, double lambda);
double diff3m_loss(const Tensor& eps_pred, const Tensor& eps, const Tensor& x_tilde,
                   const Tensor& x_t, double lambda);

struct StepMetrics {
  std::size_t step = 0;
  double total = 0.0;
  double noise_mse = 0.0;
  double recon_mse = 0.0;
};

/// Mutable training state: the model, optimizer moments and iteration counter.
struct TrainState {
  Model model;
  AdamState adam;
  std::size_t iteration = 0;
};

/// One optimization step on `batch` (indices into `data`). Per sample: t ~ U[0,T),
/// eps ~ N(0,I), x_t by forward noising, c_r by IECA on the clean image; NP on
/// x_t, MPG on both checkerboard-masked copies, recombination, loss, backward,
/// Adam. Throws DataError if a batch sample is labelled anomalous.
StepMetrics train_step(TrainState& state, const Split& data, const std::vector<std::size_t>& batch,
                       const NoiseSchedule& sched, const TrainConfig& config, std::mt19937_64& rng);

/// Gradients of the training loss for one batch without updating anything.
/// Used by tests to check gradient flow.
Gradients loss_gradients(const Model& model, const Split& data, const std::vector<std::size_t>& batch,
                         const NoiseSchedule& sched, const TrainConfig& config,
                         std::mt19937_64& rng, StepMetrics* metrics = nullptr);

/// A fresh state: model initialized from config.seed, record normalization fitted
/// on `data`.
TrainState init_training(const TrainConfig& config, const Split& data);

/// Runs config.iterations - state.iteration further steps. Each step draws from
/// its own stream derived from (seed, step), so a resumed run samples the same
/// batches as an uninterrupted one. `on_step` receives every step's metrics.
void train(TrainState& state, const Split& data, const TrainConfig& config,
           const std::function<void(const StepMetrics&)>& on_step = {});

/// Tab-separated metric log line: step, total, noise mse, reconstruction mse.
std::string format_metrics(const StepMetrics& m);

}  // namespace diff3m
