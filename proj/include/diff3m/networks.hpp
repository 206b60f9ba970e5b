#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "diff3m/conditioning.hpp"

namespace diff3m {

/// Which parts of the pipeline a model carries.
///   ddpm: NP only, no masking, no record conditioning.
///   pcm:  NP + MPG with checkerboard masking, no record conditioning.
///   full: NP + MPG + IECA conditioning.
enum class Variant { ddpm, pcm, full };

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);

/// Desk-scale conditional UNet. One block per level (conv -> SiLU -> channel
/// bias from the conditioning vector -> conv -> SiLU), 2x average-pool between
/// levels, nearest upsampling plus skip concatenation on the way up.
struct UNetConfig {
  Index image_size = 32;
  Index d_embed = 64;
  std::vector<Index> widths{16, 32};
  bool record_conditioned = true;
};

void init_unet(ParamStore& params, const std::string& prefix, const UNetConfig& config,
               std::mt19937_64& rng);

/// x: [N,1,H,W], t_emb: [N,d], c_r: [N,d] (required iff record_conditioned).
/// The conditioning vector is t_emb + A c_r + a, passed through a SiLU MLP and
/// injected into every block as a per-channel bias.
Var unet_forward(Var x, std::optional<Var> c_r, Var t_emb, const ParamStore& params,
                 const std::string& prefix, const UNetConfig& config);

/// Noise prediction network: eps_theta(x_t | c_r, t).
Var np_forward(Var x_t, std::optional<Var> c_r, Var t_emb, const ParamStore& params,
               const UNetConfig& config);
/// Masked pixel generation network: reconstructs an attenuated x_t.
Var mpg_forward(Var x_masked, std::optional<Var> c_r, Var t_emb, const ParamStore& params,
                const UNetConfig& config);

struct ModelConfig {
  Index image_size = 32;
  Index d_embed = 64;
  std::vector<Index> unet_widths{16, 32};
  std::vector<Index> encoder_widths{8, 16, 32};
  Variant variant = Variant::full;
};

/// Every trainable tensor (NP, MPG, encoder, tokenizer) plus the fixed record
/// standardization fitted on the training split.
struct Model {
  ModelConfig config;
  RecordSchema schema;
  ParamStore params;
  RecordNormalizer normalizer;

  bool uses_ieca() const { return config.variant == Variant::full; }
  bool uses_pcm() const { return config.variant != Variant::ddpm; }
  UNetConfig unet_config() const;
  EncoderConfig encoder_config() const;
  TokenizerParams tokenizer() const;
};

Model init_model(const ModelConfig& config, RecordSchema schema, std::uint64_t seed);

/// Tracked IECA over a batch. images: [N,1,H,W] in model domain; one
/// standardized record [f] per image.
struct BatchCondition {
  Var c_r;                   // [N, d]
  std::vector<Var> weights;  // N x [f, 1]
};
BatchCondition condition_batch(Tape& tape, const Model& model, const Tensor& images,
                               const std::vector<Tensor>& records);

/// Images are stored in [0,1]; the networks see [-1,1].
Tensor to_model_domain(const Tensor& image);
Tensor from_model_domain(const Tensor& x);

}  // namespace diff3m
