#pragma once

// Independent reference implementations used by the tests. Nothing here calls
// into the library's kernels.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "diff3m/autodiff.hpp"

namespace oracle {

using diff3m::Index;
using diff3m::Shape;
using diff3m::Tensor;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

inline Tensor random_normal(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

// Central finite differences against the tape's reverse sweep. Every input is
// registered as a parameter; the builder returns a scalar loss.
struct GradCheck {
  double worst = 0.0;  // largest |analytic - numeric| / (|analytic| + |numeric| + floor)
  std::string where;
  std::size_t checked = 0;
  bool ok = true;
};

using LossBuilder = std::function<diff3m::Var(diff3m::Tape&, const diff3m::ParamStore&)>;

inline double eval_loss(const LossBuilder& build, const diff3m::ParamStore& inputs) {
  diff3m::Tape tape(false);
  return build(tape, inputs).value()[0];
}

inline GradCheck check_gradients(const LossBuilder& build, diff3m::ParamStore inputs,
                                 double step = 1e-5, double rel_tol = 1e-4, double floor = 1e-7,
                                 std::size_t max_per_tensor = 0) {
  diff3m::Gradients analytic;
  {
    diff3m::Tape tape;
    diff3m::Var loss = build(tape, inputs);
    analytic = tape.backward(loss);
  }
  GradCheck r;
  for (auto& [name, tensor] : inputs) {
    const Tensor& g = analytic.at(name);
    const Index n = tensor.size();
    const Index stride = (max_per_tensor && static_cast<std::size_t>(n) > max_per_tensor)
                             ? n / static_cast<Index>(max_per_tensor)
                             : 1;
    for (Index i = 0; i < n; i += stride) {
      const double saved = tensor[i];
      tensor[i] = saved + step;
      const double up = eval_loss(build, inputs);
      tensor[i] = saved - step;
      const double down = eval_loss(build, inputs);
      tensor[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double diff = std::abs(numeric - g[i]);
      const double scale = std::max(std::abs(numeric), std::abs(g[i]));
      const bool pass = diff <= rel_tol * scale + floor;
      const double rel = diff / (scale + floor);
      if (rel > r.worst) {
        r.worst = rel;
        r.where = name + "[" + std::to_string(i) + "]";
      }
      r.ok = r.ok && pass;
      ++r.checked;
    }
  }
  return r;
}

// Direct seven-loop "same" convolution.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* b) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index o = w.dim(0), k = w.dim(2), pad = k / 2;
  Tensor out({n, o, h, wd});
  for (Index s = 0; s < n; ++s)
    for (Index oc = 0; oc < o; ++oc)
      for (Index y = 0; y < h; ++y)
        for (Index xx = 0; xx < wd; ++xx) {
          double acc = b ? (*b)[oc] : 0.0;
          for (Index ic = 0; ic < c; ++ic)
            for (Index ky = 0; ky < k; ++ky)
              for (Index kx = 0; kx < k; ++kx) {
                const Index sy = y + ky - pad, sx = xx + kx - pad;
                if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
                acc += x.at(s, ic, sy, sx) * w.at(oc, ic, ky, kx);
              }
          out.at(s, oc, y, xx) = acc;
        }
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  double hi = logits[0];
  for (double v : logits) hi = v > hi ? v : hi;
  std::vector<double> out;
  double total = 0.0;
  for (double v : logits) {
    out.push_back(std::exp(v - hi));
    total += out.back();
  }
  for (double& v : out) v /= total;
  return out;
}

// Mann-Whitney by explicit pair counting, in half-credits so the result is exact.
inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  long long half = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      half += scores[i] > scores[j] ? 2 : scores[i] == scores[j] ? 1 : 0;
    }
  }
  return static_cast<double>(half) / (2.0 * static_cast<double>(pairs));
}

// Sweeps every distinct threshold (predict positive when score >= thr) and
// sums precision times the recall increment in order of increasing recall.
inline double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
  long long positives = 0;
  for (int l : labels) positives += l;
  double area = 0.0;
  long long prev_tp = 0;
  for (double thr : thresholds) {
    long long tp = 0, predicted = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= thr) {
        ++predicted;
        tp += labels[i];
      }
    }
    area += static_cast<double>(tp - prev_tp) / static_cast<double>(positives) *
            (static_cast<double>(tp) / static_cast<double>(predicted));
    prev_tp = tp;
  }
  return area;
}

}  // namespace oracle
