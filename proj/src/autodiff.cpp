#include "diff3m/autodiff.hpp"

#include <cmath>

namespace diff3m {

const Tensor& Var::value() const { return tape_->value(id_); }

bool GradSink::wants(std::size_t k) const {
  return tape_.nodes_[static_cast<std::size_t>(inputs_.at(k))].requires_grad;
}

void GradSink::add(std::size_t k, Tensor grad) {
  const auto id = static_cast<std::size_t>(inputs_.at(k));
  if (!tape_.nodes_[id].requires_grad) return;
  auto& slot = tape_.grads_[id];
  if (!slot) {
    slot = std::move(grad);
  } else {
    slot->array() += grad.array();
  }
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::parameter(const std::string& name, const Tensor& value) {
  if (auto it = param_ids_.find(name); it != param_ids_.end()) return Var(this, it->second);
  nodes_.push_back(Node{value, {}, {}, grad_enabled_});
  const int id = static_cast<int>(nodes_.size() - 1);
  param_ids_.emplace(name, id);
  return Var(this, id);
}

Var Tape::parameter(const ParamStore& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ConfigError("unknown parameter '" + name + "'");
  return parameter(name, it->second);
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  Node node{std::move(value), {}, {}, false};
  if (grad_enabled_) {
    for (const Var& v : inputs) {
      if (v.tape_ != this) throw std::logic_error("op mixes values from different tapes");
      node.inputs.push_back(v.id_);
      node.requires_grad = node.requires_grad || nodes_[static_cast<std::size_t>(v.id_)].requires_grad;
    }
    if (node.requires_grad) {
      node.backward = std::move(backward);
    } else {
      node.inputs.clear();
    }
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Gradients Tape::backward(Var loss) {
  if (loss.tape_ != this) throw std::logic_error("backward: loss recorded on another tape");
  if (!grad_enabled_) throw std::logic_error("backward: tape was created without gradients");
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));
  }
  grads_.assign(nodes_.size(), std::nullopt);
  const auto root = static_cast<std::size_t>(loss.id_);
  if (nodes_[root].requires_grad) grads_[root] = Tensor::ones(loss.shape());
  for (std::size_t i = root + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!grads_[i] || !node.backward) continue;
    GradSink sink(*this, node.inputs);
    node.backward(*grads_[i], sink);
  }
  Gradients out;
  for (const auto& [name, id] : param_ids_) {
    const auto& g = grads_[static_cast<std::size_t>(id)];
    out.emplace(name, g ? *g : Tensor::zeros(nodes_[static_cast<std::size_t>(id)].value.shape()));
  }
  grads_.clear();
  return out;
}

namespace ad {
namespace {

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::logic_error("op mixes values from different tapes");
  return a.tape();
}

Tensor like(const Shape& shape, Tensor::Storage data) { return Tensor(shape, std::move(data)); }

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tape& t = same_tape(a, b);
  return t.record(like(a.shape(), a.value().array() + b.value().array()), {a, b},
                  [](const Tensor& g, GradSink& s) {
                    s.add(0, g);
                    s.add(1, g);
                  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tape& t = same_tape(a, b);
  return t.record(like(a.shape(), a.value().array() - b.value().array()), {a, b},
                  [](const Tensor& g, GradSink& s) {
                    s.add(0, g);
                    if (s.wants(1)) s.add(1, like(g.shape(), -g.array()));
                  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tape& t = same_tape(a, b);
  return t.record(like(a.shape(), a.value().array() * b.value().array()), {a, b},
                  [a, b](const Tensor& g, GradSink& s) {
                    if (s.wants(0)) s.add(0, like(g.shape(), g.array() * b.value().array()));
                    if (s.wants(1)) s.add(1, like(g.shape(), g.array() * a.value().array()));
                  });
}

Var div(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "div");
  Tape& t = same_tape(a, b);
  return t.record(like(a.shape(), a.value().array() / b.value().array()), {a, b},
                  [a, b](const Tensor& g, GradSink& s) {
                    const auto& bv = b.value().array();
                    if (s.wants(0)) s.add(0, like(g.shape(), g.array() / bv));
                    if (s.wants(1)) {
                      s.add(1, like(g.shape(), -g.array() * a.value().array() / (bv * bv)));
                    }
                  });
}

Var add_scalar(Var a, double v) {
  return a.tape().record(like(a.shape(), a.value().array() + v), {a},
                         [](const Tensor& g, GradSink& s) { s.add(0, g); });
}

Var mul_scalar(Var a, double v) {
  return a.tape().record(like(a.shape(), a.value().array() * v), {a},
                         [v](const Tensor& g, GradSink& s) {
                           s.add(0, like(g.shape(), g.array() * v));
                         });
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  return t.record(kernels::matmul(a.value(), b.value()), {a, b},
                  [a, b](const Tensor& g, GradSink& s) {
                    if (s.wants(0)) {
                      Tensor ga(a.shape());
                      ga.matrix().noalias() = g.matrix() * b.value().matrix().transpose();
                      s.add(0, std::move(ga));
                    }
                    if (s.wants(1)) {
                      Tensor gb(b.shape());
                      gb.matrix().noalias() = a.value().matrix().transpose() * g.matrix();
                      s.add(1, std::move(gb));
                    }
                  });
}

Var transpose(Var a) {
  return a.tape().record(kernels::transpose(a.value()), {a}, [](const Tensor& g, GradSink& s) {
    s.add(0, kernels::transpose(g));
  });
}

Var add_rowwise(Var x, Var b) {
  Tape& t = same_tape(x, b);
  if (x.value().rank() != 2 || b.size() != x.value().dim(1)) {
    throw ShapeError("add_rowwise: shape mismatch " + to_string(x.shape()) + " vs " +
                     to_string(b.shape()));
  }
  Tensor out = x.value();
  const Eigen::Map<const Eigen::RowVectorXd> bv(b.value().data(), b.size());
  out.matrix().rowwise() += bv;
  return t.record(std::move(out), {x, b}, [b](const Tensor& g, GradSink& s) {
    s.add(0, g);
    if (s.wants(1)) {
      Tensor gb(b.shape());
      Eigen::Map<Eigen::RowVectorXd>(gb.data(), gb.size()) = g.matrix().colwise().sum();
      s.add(1, std::move(gb));
    }
  });
}

Var linear(Var x, Var w) {
  if (x.value().rank() != 2 || w.value().rank() != 2 || x.value().dim(1) != w.value().dim(1)) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " incompatible with weight " +
                     to_string(w.shape()));
  }
  Tape& t = same_tape(x, w);
  Tensor out({x.value().dim(0), w.value().dim(0)});
  out.matrix().noalias() = x.value().matrix() * w.value().matrix().transpose();
  return t.record(std::move(out), {x, w}, [x, w](const Tensor& g, GradSink& s) {
    if (s.wants(0)) {
      Tensor gx(x.shape());
      gx.matrix().noalias() = g.matrix() * w.value().matrix();
      s.add(0, std::move(gx));
    }
    if (s.wants(1)) {
      Tensor gw(w.shape());
      gw.matrix().noalias() = g.matrix().transpose() * x.value().matrix();
      s.add(1, std::move(gw));
    }
  });
}

Var linear(Var x, Var w, Var b) { return add_rowwise(linear(x, w), b); }

Var scale_rows(Var m, Var sc) {
  Tape& t = same_tape(m, sc);
  if (m.value().rank() != 2 || sc.size() != m.value().dim(0)) {
    throw ShapeError("scale_rows: shape mismatch " + to_string(m.shape()) + " vs " +
                     to_string(sc.shape()));
  }
  const Eigen::Map<const Eigen::VectorXd> sv(sc.value().data(), sc.size());
  Tensor out(m.shape());
  out.matrix() = sv.asDiagonal() * m.value().matrix();
  return t.record(std::move(out), {m, sc}, [m, sc](const Tensor& g, GradSink& s) {
    const Eigen::Map<const Eigen::VectorXd> sv(sc.value().data(), sc.size());
    if (s.wants(0)) {
      Tensor gm(m.shape());
      gm.matrix() = sv.asDiagonal() * g.matrix();
      s.add(0, std::move(gm));
    }
    if (s.wants(1)) {
      Tensor gs(sc.shape());
      Eigen::Map<Eigen::VectorXd>(gs.data(), gs.size()) =
          (g.matrix().array() * m.value().matrix().array()).rowwise().sum();
      s.add(1, std::move(gs));
    }
  });
}

Var conv2d(Var x, Var w, Var b) {
  Tape& t = same_tape(x, w);
  same_tape(x, b);
  return t.record(kernels::conv2d(x.value(), w.value(), &b.value()), {x, w, b},
                  [x, w](const Tensor& g, GradSink& s) {
                    if (s.wants(0)) s.add(0, kernels::conv2d_grad_input(g, w.value()));
                    if (s.wants(1) || s.wants(2)) {
                      Tensor gw(w.shape());
                      Tensor gb({w.value().dim(0)});
                      kernels::conv2d_grad_params(g, x.value(), gw, &gb);
                      s.add(1, std::move(gw));
                      s.add(2, std::move(gb));
                    }
                  });
}

Var conv2d(Var x, Var w) {
  Tape& t = same_tape(x, w);
  return t.record(kernels::conv2d(x.value(), w.value(), nullptr), {x, w},
                  [x, w](const Tensor& g, GradSink& s) {
                    if (s.wants(0)) s.add(0, kernels::conv2d_grad_input(g, w.value()));
                    if (s.wants(1)) {
                      Tensor gw(w.shape());
                      kernels::conv2d_grad_params(g, x.value(), gw, nullptr);
                      s.add(1, std::move(gw));
                    }
                  });
}

Var avg_pool2(Var x) {
  return x.tape().record(kernels::avg_pool2(x.value()), {x}, [x](const Tensor& g, GradSink& s) {
    s.add(0, kernels::avg_pool2_grad(g, x.shape()));
  });
}

Var upsample2(Var x) {
  return x.tape().record(kernels::upsample2(x.value()), {x}, [x](const Tensor& g, GradSink& s) {
    s.add(0, kernels::upsample2_grad(g, x.shape()));
  });
}

Var global_avg_pool(Var x) {
  const Tensor& v = x.value();
  if (v.rank() != 4) throw ShapeError("global_avg_pool: expected [N,C,H,W], got " + to_string(v.shape()));
  const Index n = v.dim(0), c = v.dim(1), hw = v.dim(2) * v.dim(3);
  Tensor out({n, c});
  Eigen::Map<const RowMatrix<double>> planes(v.data(), n * c, hw);
  Eigen::Map<Eigen::VectorXd>(out.data(), n * c) = planes.rowwise().mean();
  return x.tape().record(std::move(out), {x}, [x, hw](const Tensor& g, GradSink& s) {
    Tensor gx(x.shape());
    Eigen::Map<RowMatrix<double>> gp(gx.data(), g.size(), hw);
    gp.colwise() = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size()) / static_cast<double>(hw);
    s.add(0, std::move(gx));
  });
}

Var add_channel_bias(Var x, Var b) {
  Tape& t = same_tape(x, b);
  const Tensor& v = x.value();
  if (v.rank() != 4 || b.value().rank() != 2 || b.value().dim(0) != v.dim(0) ||
      b.value().dim(1) != v.dim(1)) {
    throw ShapeError("add_channel_bias: shape mismatch " + to_string(v.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const Index planes = v.dim(0) * v.dim(1), hw = v.dim(2) * v.dim(3);
  Tensor out = v;
  Eigen::Map<RowMatrix<double>>(out.data(), planes, hw).colwise() +=
      Eigen::Map<const Eigen::VectorXd>(b.value().data(), planes);
  return t.record(std::move(out), {x, b}, [b, planes, hw](const Tensor& g, GradSink& s) {
    s.add(0, g);
    if (s.wants(1)) {
      Tensor gb(b.shape());
      Eigen::Map<Eigen::VectorXd>(gb.data(), planes) =
          Eigen::Map<const RowMatrix<double>>(g.data(), planes, hw).rowwise().sum();
      s.add(1, std::move(gb));
    }
  });
}

Var relu(Var x) {
  return x.tape().record(like(x.shape(), x.value().array().max(0.0)), {x},
                         [x](const Tensor& g, GradSink& s) {
                           s.add(0, like(g.shape(), (x.value().array() > 0.0).select(g.array(), 0.0)));
                         });
}

Var silu(Var x) {
  const auto& xv = x.value().array();
  Tensor::Storage sig = 1.0 / (1.0 + (-xv).exp());
  Tensor out = like(x.shape(), xv * sig);
  return x.tape().record(std::move(out), {x}, [x, sig](const Tensor& g, GradSink& s) {
    const auto& xv = x.value().array();
    s.add(0, like(g.shape(), g.array() * sig * (1.0 + xv * (1.0 - sig))));
  });
}

Var softmax(Var x, int axis) {
  Tensor out = kernels::softmax(x.value(), axis);
  Index outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.value().dim(i);
  for (int i = axis + 1; i < x.value().rank(); ++i) inner *= x.value().dim(i);
  const Index len = x.value().dim(axis);
  return x.tape().record(std::move(out), {x}, [x, axis, outer, inner, len](const Tensor& g, GradSink& s) {
    const Tensor p = kernels::softmax(x.value(), axis);
    Tensor gx(p.shape());
    for (Index o = 0; o < outer; ++o) {
      for (Index in = 0; in < inner; ++in) {
        const Index base = o * len * inner + in;
        double dot = 0.0;
        for (Index j = 0; j < len; ++j) dot += g[base + j * inner] * p[base + j * inner];
        for (Index j = 0; j < len; ++j) {
          gx[base + j * inner] = p[base + j * inner] * (g[base + j * inner] - dot);
        }
      }
    }
    s.add(0, std::move(gx));
  });
}

Var sum(Var x) {
  return x.tape().record(Tensor::scalar(x.value().array().sum()), {x},
                         [x](const Tensor& g, GradSink& s) {
                           s.add(0, Tensor::constant(x.shape(), g[0]));
                         });
}

Var mean(Var x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.size())); }

Var mse(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  Tape& t = same_tape(a, b);
  const double n = static_cast<double>(a.size());
  Tensor::Storage diff = a.value().array() - b.value().array();
  const double value = diff.square().sum() / n;
  return t.record(Tensor::scalar(value), {a, b}, [a, diff, n](const Tensor& g, GradSink& s) {
    Tensor::Storage d = diff * (2.0 * g[0] / n);
    if (s.wants(0)) s.add(0, like(a.shape(), d));
    if (s.wants(1)) s.add(1, like(a.shape(), -d));
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  std::vector<const Tensor*> values;
  for (const Var& p : parts) {
    same_tape(parts.front(), p);
    values.push_back(&p.value());
  }
  Tensor out = kernels::concat(values, axis);
  Index outer = 1;
  for (int i = 0; i < axis; ++i) outer *= out.dim(i);
  std::vector<Index> blocks;
  for (const Var& p : parts) blocks.push_back(p.size() / outer);
  return parts.front().tape().record(
      std::move(out), parts, [parts, blocks, outer](const Tensor& g, GradSink& s) {
        const Index stride = g.size() / outer;
        Index offset = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
          if (s.wants(k)) {
            Tensor gk(parts[k].shape());
            for (Index o = 0; o < outer; ++o) {
              std::copy_n(g.data() + o * stride + offset, blocks[k], gk.data() + o * blocks[k]);
            }
            s.add(k, std::move(gk));
          }
          offset += blocks[k];
        }
      });
}

Var slice_rows(Var x, Index start, Index count) {
  const Tensor& v = x.value();
  if (start < 0 || count <= 0 || start + count > v.dim(0)) {
    throw ShapeError("slice_rows: rows [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " + to_string(v.shape()));
  }
  Shape shape = v.shape();
  shape[0] = count;
  const Index block = v.size() / v.dim(0);
  Tensor out(shape);
  std::copy_n(v.data() + start * block, count * block, out.data());
  return x.tape().record(std::move(out), {x}, [x, start, block](const Tensor& g, GradSink& s) {
    Tensor gx(x.shape());
    std::copy_n(g.data(), g.size(), gx.data() + start * block);
    s.add(0, std::move(gx));
  });
}

Var reshape(Var x, Shape shape) {
  return x.tape().record(x.value().reshaped(std::move(shape)), {x},
                         [x](const Tensor& g, GradSink& s) { s.add(0, g.reshaped(x.shape())); });
}

}  // namespace ad
}  // namespace diff3m
