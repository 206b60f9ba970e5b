#include "diff3m/detection.hpp"

#include <cmath>

#include "diff3m/pcm.hpp"

namespace diff3m {

std::string to_string(ScoreKind kind) { return kind == ScoreKind::mse ? "mse" : "maxabs"; }

ScoreKind parse_score_kind(const std::string& text) {
  if (text == "mse") return ScoreKind::mse;
  if (text == "maxabs") return ScoreKind::maxabs;
  throw ConfigError("unknown score kind '" + text + "' (expected mse or maxabs)");
}

Tensor anomaly_map(const Tensor& x, const Tensor& x0_hat) {
  require_same_shape(x.shape(), x0_hat.shape(), "anomaly_map");
  return Tensor(x.shape(), (x.array() - x0_hat.array()).abs());
}

double anomaly_score(const Tensor& x, const Tensor& x0_hat, ScoreKind kind) {
  require_same_shape(x.shape(), x0_hat.shape(), "anomaly_score");
  const auto diff = x.array() - x0_hat.array();
  return kind == ScoreKind::mse ? diff.square().mean() : diff.abs().maxCoeff();
}

double anomaly_score(const Tensor& x, const Tensor& x0_hat, const std::string& kind) {
  return anomaly_score(x, x0_hat, parse_score_kind(kind));
}

namespace {

Tensor predict(const Model& model, const char* net, const Tensor& x, const Tensor* c_r,
               const Tensor& temb) {
  Tape tape(false);
  std::optional<Var> cv;
  if (c_r) cv = tape.constant(*c_r);
  return unet_forward(tape.constant(x), cv, tape.constant(temb), model.params, net,
                      model.unet_config())
      .value();
}

Tensor repeat_rows(const Tensor& row, Index n) {
  Tensor out({n, row.size()});
  out.matrix().rowwise() = Eigen::Map<const Eigen::RowVectorXd>(row.data(), row.size());
  return out;
}

}  // namespace

std::vector<AnomalyResult> detect_batch(const std::vector<Tensor>& images,
                                        const std::vector<PatientRecord>& records,
                                        const Model& model, const NoiseSchedule& sched,
                                        const DetectOptions& options) {
  if (options.t_prime < 0 || options.t_prime >= sched.steps()) {
    throw ConfigError("t_prime must satisfy 0 <= t_prime < T = " + std::to_string(sched.steps()) +
                      ", got " + std::to_string(options.t_prime));
  }
  if (images.size() != records.size()) {
    throw ShapeError("detect: " + std::to_string(images.size()) + " images but " +
                     std::to_string(records.size()) + " records");
  }
  const Index size = model.config.image_size;
  const Index n = static_cast<Index>(images.size());
  const Index plane = size * size;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != Shape{size, size}) {
      throw ShapeError("detect: image shape " + to_string(images[i].shape()) +
                       " does not match the model's " + std::to_string(size) + "x" +
                       std::to_string(size));
    }
    if (!records[i].schema || !(*records[i].schema == model.schema)) {
      throw DataError("detect: record schema does not match the checkpoint schema");
    }
  }

  std::vector<AnomalyResult> results(images.size());
  if (n == 0) return results;
  if (options.t_prime == 0) {
    for (std::size_t i = 0; i < images.size(); ++i) {
      results[i] = {images[i], Tensor::zeros(images[i].shape()), 0.0, 0.0, 0};
    }
    return results;
  }

  Tensor x({n, 1, size, size});
  for (Index i = 0; i < n; ++i) {
    x.array().segment(i * plane, plane) = to_model_domain(images[static_cast<std::size_t>(i)]).array();
  }

  std::optional<Tensor> c_r;
  if (model.uses_ieca()) {
    std::vector<Tensor> normalized;
    for (const auto& r : records) normalized.push_back(model.normalizer.apply(r));
    Tape tape(false);
    c_r = condition_batch(tape, model, x, normalized).c_r.value();
  }
  const Tensor* cond = c_r ? &*c_r : nullptr;

  const std::vector<int> steps = ddim_timesteps(options.t_prime, options.stride);
  Tensor cur = x;
  for (std::size_t i = 0; i + 1 < steps.size(); ++i) {
    const Tensor temb = repeat_rows(timestamp_embedding(steps[i], model.config.d_embed), n);
    const Tensor eps = predict(model, "np", cur, cond, temb);
    cur = ddim_encode_step(cur, eps, steps[i], sched, steps[i + 1]);
  }

  const MaskPair binary = make_mask_pair(size, size, 0, sched.steps());
  for (std::size_t i = steps.size() - 1; i > 0; --i) {
    const int t = steps[i];
    const Tensor temb = repeat_rows(timestamp_embedding(t, model.config.d_embed), n);
    const Tensor eps = predict(model, "np", cur, cond, temb);
    Tensor source = cur;
    if (model.uses_pcm()) {
      const MaskPair pair = make_mask_pair(size, size, t, sched.steps());
      auto [x_m1, x_m2] = apply_masks(cur, pair);
      Tensor both = kernels::concat({&x_m1, &x_m2}, 0);
      Tensor cond2;
      if (cond) cond2 = kernels::concat({cond, cond}, 0);
      Tensor y = predict(model, "mpg", both, cond ? &cond2 : nullptr, kernels::concat({&temb, &temb}, 0));
      Tensor y1({n, 1, size, size}, y.array().head(n * plane));
      Tensor y2({n, 1, size, size}, y.array().tail(n * plane));
      source = recombine(y1, y2, binary);
    }
    cur = ddim_decode_step(source, eps, t, sched, steps[i - 1]);
  }

  for (Index i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    Tensor rec({size, size}, cur.array().segment(i * plane, plane));
    rec = from_model_domain(rec);
    rec.array() = rec.array().max(0.0).min(1.0);
    AnomalyResult& r = results[idx];
    r.anomaly_map = anomaly_map(images[idx], rec);
    r.score_mse = anomaly_score(images[idx], rec, ScoreKind::mse);
    r.score_maxabs = anomaly_score(images[idx], rec, ScoreKind::maxabs);
    r.x0_hat = std::move(rec);
    r.t_prime = options.t_prime;
  }
  return results;
}

AnomalyResult detect(const Tensor& image, const PatientRecord& record, const Model& model,
                     const NoiseSchedule& sched, const DetectOptions& options) {
  return detect_batch({image}, {record}, model, sched, options).front();
}

}  // namespace diff3m
