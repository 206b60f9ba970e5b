#include "diff3m/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace diff3m {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
  }
}

bool all_finite(const Tensor& t) { return t.array().allFinite(); }

namespace kernels {
namespace {

void require_rank(const Tensor& t, int r, const char* op) {
  if (t.rank() != r) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                     to_string(t.shape()));
  }
}

// Column buffer for one image: rows are (c, ky, kx), columns are output pixels.
void im2col(const double* img, Index channels, Index height, Index width, Index k,
            RowMatrix<double>& cols) {
  const Index pad = k / 2;
  const Index hw = height * width;
  cols.resize(channels * k * k, hw);
  for (Index c = 0; c < channels; ++c) {
    const double* plane = img + c * hw;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        double* row = cols.data() + ((c * k + ky) * k + kx) * hw;
        for (Index y = 0; y < height; ++y) {
          const Index sy = y + ky - pad;
          double* out = row + y * width;
          if (sy < 0 || sy >= height) {
            std::fill(out, out + width, 0.0);
            continue;
          }
          const double* src = plane + sy * width;
          const Index shift = kx - pad;
          const Index lo = std::max<Index>(0, -shift), hi = std::min(width, width - shift);
          std::fill(out, out + lo, 0.0);
          std::copy(src + lo + shift, src + hi + shift, out + lo);
          std::fill(out + hi, out + width, 0.0);
        }
      }
    }
  }
}

void col2im_add(const RowMatrix<double>& cols, Index channels, Index height, Index width, Index k,
                double* img) {
  const Index pad = k / 2;
  const Index hw = height * width;
  for (Index c = 0; c < channels; ++c) {
    double* plane = img + c * hw;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const double* row = cols.data() + ((c * k + ky) * k + kx) * hw;
        for (Index y = 0; y < height; ++y) {
          const Index sy = y + ky - pad;
          if (sy < 0 || sy >= height) continue;
          const double* in = row + y * width;
          double* dst = plane + sy * width;
          for (Index x = 0; x < width; ++x) {
            const Index sx = x + kx - pad;
            if (sx >= 0 && sx < width) dst[sx] += in[x];
          }
        }
      }
    }
  }
}

void check_conv_shapes(const Tensor& x, const Tensor& w) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  if (w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0) {
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " incompatible with kernel " +
                     to_string(w.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)});
  out.matrix().noalias() = a.matrix() * b.matrix();
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  Tensor out({a.dim(1), a.dim(0)});
  out.matrix() = a.matrix().transpose();
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias) {
  check_conv_shapes(x, w);
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index o = w.dim(0), k = w.dim(2);
  if (bias && (bias->rank() != 1 || bias->dim(0) != o)) {
    throw ShapeError("conv2d: bias " + to_string(bias->shape()) + " does not match kernel " +
                     to_string(w.shape()));
  }
  const Index hw = h * wd;
  Tensor out({n, o, h, wd});
  Eigen::Map<const RowMatrix<double>> wm(w.data(), o, c * k * k);
  RowMatrix<double> cols;
  for (Index i = 0; i < n; ++i) {
    im2col(x.data() + i * c * hw, c, h, wd, k, cols);
    Eigen::Map<RowMatrix<double>> om(out.data() + i * o * hw, o, hw);
    om.noalias() = wm * cols;
    if (bias) om.colwise() += Eigen::Map<const Eigen::VectorXd>(bias->data(), o);
  }
  return out;
}

Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& w) {
  const Index n = grad_out.dim(0), h = grad_out.dim(2), wd = grad_out.dim(3);
  const Index o = w.dim(0), c = w.dim(1), k = w.dim(2);
  const Index hw = h * wd;
  Tensor gx({n, c, h, wd});
  Eigen::Map<const RowMatrix<double>> wm(w.data(), o, c * k * k);
  RowMatrix<double> cols(c * k * k, hw);
  for (Index i = 0; i < n; ++i) {
    Eigen::Map<const RowMatrix<double>> gm(grad_out.data() + i * o * hw, o, hw);
    cols.noalias() = wm.transpose() * gm;
    col2im_add(cols, c, h, wd, k, gx.data() + i * c * hw);
  }
  return gx;
}

void conv2d_grad_params(const Tensor& grad_out, const Tensor& x, Tensor& grad_w, Tensor* grad_b) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index o = grad_w.dim(0), k = grad_w.dim(2);
  const Index hw = h * wd;
  Eigen::Map<RowMatrix<double>> gw(grad_w.data(), o, c * k * k);
  RowMatrix<double> cols;
  for (Index i = 0; i < n; ++i) {
    im2col(x.data() + i * c * hw, c, h, wd, k, cols);
    Eigen::Map<const RowMatrix<double>> gm(grad_out.data() + i * o * hw, o, hw);
    gw.noalias() += gm * cols.transpose();
    if (grad_b) {
      Eigen::Map<Eigen::VectorXd>(grad_b->data(), o) += gm.rowwise().sum();
    }
  }
}

Tensor avg_pool2(const Tensor& x) {
  require_rank(x, 4, "avg_pool2");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2) {
    throw ShapeError("avg_pool2: spatial size must be even, got " + to_string(x.shape()));
  }
  Tensor out({n, c, h / 2, w / 2});
  for (Index p = 0; p < n * c; ++p) {
    const double* in = x.data() + p * h * w;
    double* o = out.data() + p * (h / 2) * (w / 2);
    for (Index y = 0; y < h / 2; ++y) {
      for (Index xx = 0; xx < w / 2; ++xx) {
        const double* a = in + (2 * y) * w + 2 * xx;
        o[y * (w / 2) + xx] = 0.25 * (a[0] + a[1] + a[w] + a[w + 1]);
      }
    }
  }
  return out;
}

Tensor avg_pool2_grad(const Tensor& grad_out, const Shape& input_shape) {
  const Index h = input_shape[2], w = input_shape[3];
  Tensor gx(input_shape);
  const Index planes = input_shape[0] * input_shape[1];
  for (Index p = 0; p < planes; ++p) {
    const double* g = grad_out.data() + p * (h / 2) * (w / 2);
    double* o = gx.data() + p * h * w;
    for (Index y = 0; y < h; ++y) {
      for (Index xx = 0; xx < w; ++xx) o[y * w + xx] = 0.25 * g[(y / 2) * (w / 2) + xx / 2];
    }
  }
  return gx;
}

Tensor upsample2(const Tensor& x) {
  require_rank(x, 4, "upsample2");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  for (Index p = 0; p < n * c; ++p) {
    const double* in = x.data() + p * h * w;
    double* o = out.data() + p * 4 * h * w;
    for (Index y = 0; y < 2 * h; ++y) {
      for (Index xx = 0; xx < 2 * w; ++xx) o[y * 2 * w + xx] = in[(y / 2) * w + xx / 2];
    }
  }
  return out;
}

Tensor upsample2_grad(const Tensor& grad_out, const Shape& input_shape) {
  const Index h = input_shape[2], w = input_shape[3];
  Tensor gx(input_shape);
  const Index planes = input_shape[0] * input_shape[1];
  for (Index p = 0; p < planes; ++p) {
    const double* g = grad_out.data() + p * 4 * h * w;
    double* o = gx.data() + p * h * w;
    for (Index y = 0; y < 2 * h; ++y) {
      for (Index xx = 0; xx < 2 * w; ++xx) o[(y / 2) * w + xx / 2] += g[y * 2 * w + xx];
    }
  }
  return gx;
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis < 0 || axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                     to_string(x.shape()));
  }
  Index outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const Index len = x.dim(axis);
  Tensor out(x.shape());
  for (Index o = 0; o < outer; ++o) {
    for (Index in = 0; in < inner; ++in) {
      const Index base = o * len * inner + in;
      double mx = x[base];
      for (Index j = 1; j < len; ++j) mx = std::max(mx, x[base + j * inner]);
      double total = 0.0;
      for (Index j = 0; j < len; ++j) {
        const double e = std::exp(x[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (Index j = 0; j < len; ++j) out[base + j * inner] /= total;
    }
  }
  return out;
}

Tensor concat(const std::vector<const Tensor*>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Tensor& first = *parts.front();
  if (axis < 0 || axis >= first.rank()) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                     to_string(first.shape()));
  }
  Shape shape = first.shape();
  shape[static_cast<std::size_t>(axis)] = 0;
  for (const Tensor* p : parts) {
    bool ok = p->rank() == first.rank();
    for (int i = 0; ok && i < first.rank(); ++i) {
      if (i != axis && p->dim(i) != first.dim(i)) ok = false;
    }
    if (!ok) {
      throw ShapeError("concat: shape mismatch " + to_string(first.shape()) + " vs " +
                       to_string(p->shape()) + " along axis " + std::to_string(axis));
    }
    shape[static_cast<std::size_t>(axis)] += p->dim(axis);
  }
  Index outer = 1;
  for (int i = 0; i < axis; ++i) outer *= first.dim(i);
  Tensor out(shape);
  double* dst = out.data();
  for (Index o = 0; o < outer; ++o) {
    for (const Tensor* p : parts) {
      const Index block = p->size() / outer;
      std::copy_n(p->data() + o * block, block, dst);
      dst += block;
    }
  }
  return out;
}

}  // namespace kernels
}  // namespace diff3m
