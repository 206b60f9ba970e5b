#pragma once

#include "diff3m/synthdata.hpp"
#include "diff3m/training.hpp"

namespace fixtures {

// Small 16x16 phantom split for fast tests.
inline diff3m::Split small_split(std::size_t n, std::uint64_t seed = 5, const char* name = "train") {
  diff3m::DatasetSpec spec;
  spec.gen.image_size = 16;
  spec.seed = seed;
  spec.train_normal = n;
  spec.test_normal = n / 2;
  spec.test_anomalous = n - n / 2;
  return diff3m::generate_split(spec, name);
}

inline diff3m::TrainConfig small_config(diff3m::Variant variant = diff3m::Variant::full) {
  diff3m::TrainConfig cfg;
  cfg.model.image_size = 16;
  cfg.model.d_embed = 16;
  cfg.model.unet_widths = {8, 16};
  cfg.model.encoder_widths = {4, 8, 8};
  cfg.model.variant = variant;
  cfg.batch_size = 4;
  cfg.iterations = 5;
  cfg.learning_rate = 1e-3;
  return cfg;
}

}  // namespace fixtures
