#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "diff3m/tensor.hpp"

namespace diff3m {

/// Named parameter tensors. Ordered so iteration (and therefore checkpoint
/// layout and optimizer updates) is deterministic.
using ParamStore = std::map<std::string, Tensor>;
using Gradients = std::map<std::string, Tensor>;

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Index size() const { return value().size(); }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Accumulates input gradients for one node during the backward sweep.
class GradSink {
 public:
  /// True when input k needs a gradient; ops skip work for inputs that don't.
  bool wants(std::size_t k) const;
  void add(std::size_t k, Tensor grad);

 private:
  friend class Tape;
  GradSink(Tape& tape, const std::vector<int>& inputs) : tape_(tape), inputs_(inputs) {}
  Tape& tape_;
  const std::vector<int>& inputs_;
};

// Linear record of forward operations. Node ids are assigned in creation order,
// which is a topological order, so backward is a single reverse sweep.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& grad_out, GradSink& sink)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor value);

  /// Registers a tracked leaf. Requesting the same name again returns the same
  /// node, so every use of a parameter accumulates into one gradient.
  Var parameter(const std::string& name, const Tensor& value);
  Var parameter(const ParamStore& params, const std::string& name);

  const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }

  /// Records an op result. `backward` is dropped when no input needs a gradient.
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  /// Reverse sweep from a scalar loss. Returns one gradient per registered
  /// parameter; parameters the loss does not reach get zeros.
  Gradients backward(Var loss);

 private:
  friend class GradSink;
  struct Node {
    Tensor value;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> param_ids_;
  std::vector<std::optional<Tensor>> grads_;
};

// Differentiable op catalog. Shape errors name the offending shapes.
namespace ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var add_scalar(Var a, double s);
Var mul_scalar(Var a, double s);

Var matmul(Var a, Var b);
Var transpose(Var a);
/// x [N,in] -> x * W^T + b, with W [out,in] and b [out].
Var linear(Var x, Var w, Var b);
Var linear(Var x, Var w);
/// Adds the row vector b [M] to every row of x [N,M].
Var add_rowwise(Var x, Var b);
/// Multiplies row i of m [R,C] by s[i]; s has R entries.
Var scale_rows(Var m, Var s);

Var conv2d(Var x, Var w, Var b);
Var conv2d(Var x, Var w);
Var avg_pool2(Var x);
Var upsample2(Var x);
/// Mean over the spatial axes: [N,C,H,W] -> [N,C].
Var global_avg_pool(Var x);
/// Adds b [N,C] to every pixel of channel c of sample n in x [N,C,H,W].
Var add_channel_bias(Var x, Var b);

Var relu(Var x);
Var silu(Var x);
Var softmax(Var x, int axis);

Var sum(Var x);
Var mean(Var x);
Var mse(Var a, Var b);

Var concat(const std::vector<Var>& parts, int axis);
/// Rows [start, start+count) along axis 0.
Var slice_rows(Var x, Index start, Index count);
Var reshape(Var x, Shape shape);

}  // namespace ad

inline Var operator+(Var a, Var b) { return ad::add(a, b); }
inline Var operator-(Var a, Var b) { return ad::sub(a, b); }
inline Var operator*(Var a, Var b) { return ad::mul(a, b); }
inline Var operator/(Var a, Var b) { return ad::div(a, b); }
inline Var operator*(Var a, double s) { return ad::mul_scalar(a, s); }
inline Var operator*(double s, Var a) { return ad::mul_scalar(a, s); }
inline Var operator+(Var a, double s) { return ad::add_scalar(a, s); }

}  // namespace diff3m
