#include "diff3m/pcm.hpp"

#include <string>

namespace diff3m {
namespace {

void require_spatial(const Shape& shape, const MaskPair& pair, const char* op) {
  const Index h = pair.m1.dim(0), w = pair.m1.dim(1);
  if (shape.size() < 2 || shape[shape.size() - 2] != h || shape[shape.size() - 1] != w) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(shape) + " vs mask " +
                     to_string(pair.m1.shape()));
  }
}

}  // namespace

MaskPair make_mask_pair(Index height, Index width, int t, int total_steps) {
  if (total_steps <= 0) throw ConfigError("make_mask_pair: T must be positive");
  if (height < 1 || width < 1) throw ShapeError("make_mask_pair: empty image");
  if (t < 0 || t > total_steps) {
    throw ConfigError("make_mask_pair: step " + std::to_string(t) + " outside [0, " +
                      std::to_string(total_steps) + "]");
  }
  MaskPair pair;
  pair.s = static_cast<double>(t) / total_steps;
  pair.m1 = Tensor({height, width});
  for (Index i = 0; i < height; ++i) {
    for (Index j = 0; j < width; ++j) pair.m1.at(i, j) = static_cast<double>((i + j) % 2);
  }
  pair.m2 = Tensor(pair.m1.shape(), 1.0 - pair.m1.array());
  pair.m1_scaled = Tensor(pair.m1.shape(), pair.m1.array() * (1.0 - pair.s) + pair.s);
  pair.m2_scaled = Tensor(pair.m2.shape(), pair.m2.array() * (1.0 - pair.s) + pair.s);
  return pair;
}

Tensor tile_mask(const Tensor& mask, const Shape& shape) {
  const Index plane = mask.size();
  if (shape_size(shape) % plane != 0) {
    throw ShapeError("tile_mask: mask " + to_string(mask.shape()) + " does not tile " +
                     to_string(shape));
  }
  Tensor out(shape);
  Eigen::Map<RowMatrix<double>>(out.data(), out.size() / plane, plane).rowwise() =
      Eigen::Map<const Eigen::RowVectorXd>(mask.data(), plane);
  return out;
}

std::pair<Tensor, Tensor> apply_masks(const Tensor& x_t, const MaskPair& pair) {
  require_spatial(x_t.shape(), pair, "apply_masks");
  return {Tensor(x_t.shape(), x_t.array() * tile_mask(pair.m1_scaled, x_t.shape()).array()),
          Tensor(x_t.shape(), x_t.array() * tile_mask(pair.m2_scaled, x_t.shape()).array())};
}

Tensor recombine(const Tensor& y1, const Tensor& y2, const MaskPair& pair) {
  require_same_shape(y1.shape(), y2.shape(), "recombine");
  require_spatial(y1.shape(), pair, "recombine");
  return Tensor(y1.shape(), y1.array() * tile_mask(pair.m2, y1.shape()).array() +
                                y2.array() * tile_mask(pair.m1, y1.shape()).array());
}

std::shared_ptr<const MaskPair> MaskCache::get(Index height, Index width, int t, int total_steps) {
  const auto key = std::make_tuple(height, width, t, total_steps);
  std::lock_guard lock(mutex_);
  auto it = pairs_.find(key);
  if (it == pairs_.end()) {
    it = pairs_.emplace(key, std::make_shared<const MaskPair>(
                                 make_mask_pair(height, width, t, total_steps)))
             .first;
  }
  return it->second;
}

}  // namespace diff3m
