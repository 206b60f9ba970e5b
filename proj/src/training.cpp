#include "diff3m/training.hpp"

#include <cstdio>

#include "diff3m/seed.hpp"

namespace diff3m {

std::string to_string(Phase phase) { return phase == Phase::pretrain ? "pretrain" : "joint"; }

Phase parse_phase(const std::string& text) {
  if (text == "pretrain") return Phase::pretrain;
  if (text == "joint") return Phase::joint;
  throw ConfigError("unknown phase '" + text + "' (expected pretrain or joint)");
}

void TrainConfig::validate() const {
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw ConfigError("lambda must lie strictly inside (0,1), got " + std::to_string(lambda));
  }
  if (steps_T < 1 || batch_size == 0 || iterations == 0) {
    throw ConfigError("T, batch_size and iterations must be positive");
  }
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (model.image_size < 1 || model.d_embed < 2 || model.d_embed % 2) {
    throw ConfigError("image_size must be positive and d_embed even");
  }
  (void)schedule();
}

Var diff3m_loss(Var eps_pred, Var eps, Var x_tilde, Var x_t, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw ConfigError("lambda must lie strictly inside (0,1), got " + std::to_string(lambda));
  }
  return ad::add(ad::mul_scalar(ad::mse(eps_pred, eps), lambda),
                 ad::mul_scalar(ad::mse(x_tilde, x_t), 1.0 - lambda));
}

double diff3m_loss(const Tensor& eps_pred, const Tensor& eps, const Tensor& x_tilde,
                   const Tensor& x_t, double lambda) {
  Tape tape(false);
  return diff3m_loss(tape.constant(eps_pred), tape.constant(eps), tape.constant(x_tilde),
                     tape.constant(x_t), lambda)
      .value()[0];
}

namespace {

struct LossGraph {
  Var loss;
  StepMetrics metrics;
};

LossGraph build_loss(Tape& tape, const Model& model, const Split& data,
                     const std::vector<std::size_t>& batch, const NoiseSchedule& sched,
                     const TrainConfig& config, std::mt19937_64& rng) {
  const Index n = static_cast<Index>(batch.size());
  const Index size = model.config.image_size;
  const Index plane = size * size;
  if (n == 0) throw ConfigError("empty training batch");

  Tensor clean({n, 1, size, size});
  std::vector<Tensor> records;
  for (Index i = 0; i < n; ++i) {
    const std::size_t idx = batch[static_cast<std::size_t>(i)];
    if (idx >= data.size()) throw ConfigError("batch index out of range");
    if (data.labels[idx] != 0) {
      throw DataError("training sample " + std::to_string(idx) +
                      " is labelled anomalous; training uses normal data only");
    }
    const Tensor& img = data.images[idx];
    if (img.shape() != Shape{size, size}) {
      throw ShapeError("training image " + std::to_string(idx) + " has shape " +
                       to_string(img.shape()) + ", model expects " + std::to_string(size));
    }
    clean.array().segment(i * plane, plane) = to_model_domain(img).array();
    records.push_back(model.normalizer.apply(data.records[idx]));
  }

  std::uniform_int_distribution<int> pick_t(0, sched.steps() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<int> steps(static_cast<std::size_t>(n));
  for (auto& t : steps) t = pick_t(rng);
  Tensor eps(clean.shape());
  for (Index i = 0; i < eps.size(); ++i) eps[i] = normal(rng);

  Tensor x_t(clean.shape());
  for (Index i = 0; i < n; ++i) {
    const double ab = sched.alpha_bar(steps[static_cast<std::size_t>(i)]);
    x_t.array().segment(i * plane, plane) = std::sqrt(ab) * clean.array().segment(i * plane, plane) +
                                            std::sqrt(1.0 - ab) * eps.array().segment(i * plane, plane);
  }

  const UNetConfig unet = model.unet_config();
  Var temb = tape.constant(timestamp_embeddings(steps, model.config.d_embed));
  std::optional<Var> c_r;
  if (model.uses_ieca()) c_r = condition_batch(tape, model, clean, records).c_r;

  Var xt = tape.constant(x_t);
  Var eps_var = tape.constant(eps);
  Var eps_pred = np_forward(xt, c_r, temb, model.params, unet);

  LossGraph out;
  const bool noise_only = config.phase == Phase::pretrain || !model.uses_pcm();
  if (noise_only) {
    out.loss = ad::mse(eps_pred, eps_var);
    out.metrics.noise_mse = out.loss.value()[0];
    out.metrics.total = out.metrics.noise_mse;
    return out;
  }

  // Both masked branches go through MPG as one batch of 2N with shared weights.
  Tensor masked({2 * n, 1, size, size});
  for (Index i = 0; i < n; ++i) {
    const MaskPair pair = make_mask_pair(size, size, steps[static_cast<std::size_t>(i)], sched.steps());
    const auto x = x_t.array().segment(i * plane, plane);
    masked.array().segment(i * plane, plane) =
        x * Eigen::Map<const Eigen::ArrayXd>(pair.m1_scaled.data(), plane);
    masked.array().segment((n + i) * plane, plane) =
        x * Eigen::Map<const Eigen::ArrayXd>(pair.m2_scaled.data(), plane);
  }
  std::optional<Var> c_r2;
  if (c_r) c_r2 = ad::concat({*c_r, *c_r}, 0);
  Var temb2 = ad::concat({temb, temb}, 0);
  Var y = mpg_forward(tape.constant(std::move(masked)), c_r2, temb2, model.params, unet);

  const MaskPair binary = make_mask_pair(size, size, 0, sched.steps());
  Var m1 = tape.constant(tile_mask(binary.m1, clean.shape()));
  Var m2 = tape.constant(tile_mask(binary.m2, clean.shape()));
  Var x_tilde = ad::add(ad::mul(ad::slice_rows(y, 0, n), m2), ad::mul(ad::slice_rows(y, n, n), m1));

  Var noise_term = ad::mse(eps_pred, eps_var);
  Var recon_term = ad::mse(x_tilde, xt);
  out.loss = ad::add(ad::mul_scalar(noise_term, config.lambda),
                     ad::mul_scalar(recon_term, 1.0 - config.lambda));
  out.metrics.noise_mse = noise_term.value()[0];
  out.metrics.recon_mse = recon_term.value()[0];
  out.metrics.total = out.loss.value()[0];
  return out;
}

}  // namespace

Gradients loss_gradients(const Model& model, const Split& data, const std::vector<std::size_t>& batch,
                         const NoiseSchedule& sched, const TrainConfig& config,
                         std::mt19937_64& rng, StepMetrics* metrics) {
  Tape tape;
  LossGraph g = build_loss(tape, model, data, batch, sched, config, rng);
  Gradients grads = tape.backward(g.loss);
  for (const auto& [name, value] : model.params) {
    grads.try_emplace(name, Tensor::zeros(value.shape()));
  }
  if (metrics) *metrics = g.metrics;
  return grads;
}

StepMetrics train_step(TrainState& state, const Split& data, const std::vector<std::size_t>& batch,
                       const NoiseSchedule& sched, const TrainConfig& config, std::mt19937_64& rng) {
  StepMetrics m;
  Gradients grads = loss_gradients(state.model, data, batch, sched, config, rng, &m);
  state.adam.options.learning_rate = config.learning_rate;
  adam_step(state.model.params, grads, state.adam);
  ++state.iteration;
  m.step = state.iteration;
  return m;
}

TrainState init_training(const TrainConfig& config, const Split& data) {
  config.validate();
  if (!data.schema) throw DataError("training split has no schema");
  TrainState state{init_model(config.model, *data.schema, config.seed), {}, 0};
  state.model.normalizer = RecordNormalizer::fit(data.records);
  state.adam.options.learning_rate = config.learning_rate;
  return state;
}

void train(TrainState& state, const Split& data, const TrainConfig& config,
           const std::function<void(const StepMetrics&)>& on_step) {
  config.validate();
  if (data.size() == 0) throw DataError("training split is empty");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] != 0) {
      throw DataError("training split contains anomalous sample " + std::to_string(i));
    }
  }
  const NoiseSchedule sched = config.schedule();
  while (state.iteration < config.iterations) {
    std::mt19937_64 rng(derive_seed(config.seed, {0x7472u, state.iteration}));
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    std::vector<std::size_t> batch(config.batch_size);
    for (auto& b : batch) b = pick(rng);
    const StepMetrics m = train_step(state, data, batch, sched, config, rng);
    if (on_step) on_step(m);
  }
}

std::string format_metrics(const StepMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu\t%.8g\t%.8g\t%.8g", m.step, m.total, m.noise_mse, m.recon_mse);
  return buf;
}

}  // namespace diff3m
