#include "diff3m/adam.hpp"

#include <cmath>

namespace diff3m {

void adam_step(ParamStore& params, const Gradients& grads, AdamState& state) {
  if (grads.size() != params.size()) {
    throw ConfigError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                      std::to_string(params.size()) + " parameters");
  }
  for (const auto& [name, value] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ConfigError("adam_step: missing gradient for '" + name + "'");
    require_same_shape(value.shape(), it->second.shape(), "adam_step");
  }

  const AdamOptions& o = state.options;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);

  for (auto& [name, value] : params) {
    const auto& g = grads.at(name).array();
    auto& m = state.first_moment.try_emplace(name, Tensor::zeros(value.shape())).first->second;
    auto& v = state.second_moment.try_emplace(name, Tensor::zeros(value.shape())).first->second;
    m.array() = o.beta1 * m.array() + (1.0 - o.beta1) * g;
    v.array() = o.beta2 * v.array() + (1.0 - o.beta2) * g.square();
    value.array() -= o.learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + o.epsilon);
  }
}

}  // namespace diff3m
