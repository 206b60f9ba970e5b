#pragma once

#include <cstdint>

#include "diff3m/autodiff.hpp"

namespace diff3m {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates per parameter plus the update counter.
/// Moments are created as zeros on the first step.
struct AdamState {
  AdamOptions options;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update of every parameter in `params`.
/// Throws ConfigError if `grads` is not keyed exactly like `params`.
void adam_step(ParamStore& params, const Gradients& grads, AdamState& state);

}  // namespace diff3m
