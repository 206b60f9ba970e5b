#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <utility>

#include "diff3m/tensor.hpp"

namespace diff3m {

/// Complementary pixel checkerboard masks for one (height, width, t).
/// m1(i,j) = (i+j) mod 2, m2 = 1 - m1; the scaled forms are m*(1-s) + s with
/// s = t/T, so masked sites are attenuated by s rather than zeroed.
struct MaskPair {
  Tensor m1;
  Tensor m2;
  Tensor m1_scaled;
  Tensor m2_scaled;
  double s = 0.0;
};

MaskPair make_mask_pair(Index height, Index width, int t, int total_steps);

/// x_t * scaled masks. x_t is [..., H, W]; the masks broadcast over leading axes.
std::pair<Tensor, Tensor> apply_masks(const Tensor& x_t, const MaskPair& pair);

/// y1 * m2 + y2 * m1 with the binary masks: each pixel comes from the branch in
/// which it was masked.
Tensor recombine(const Tensor& y1, const Tensor& y2, const MaskPair& pair);

/// Repeats an [H,W] mask over the leading axes of `shape` ([..., H, W]).
Tensor tile_mask(const Tensor& mask, const Shape& shape);

/// Thread-safe memo of mask pairs keyed by (height, width, t, T).
class MaskCache {
 public:
  std::shared_ptr<const MaskPair> get(Index height, Index width, int t, int total_steps);

 private:
  std::mutex mutex_;
  std::map<std::tuple<Index, Index, int, int>, std::shared_ptr<const MaskPair>> pairs_;
};

}  // namespace diff3m
