#include "diff3m/networks.hpp"

namespace diff3m {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::ddpm: return "ddpm";
    case Variant::pcm: return "pcm";
    case Variant::full: return "full";
  }
  return "full";
}

Variant parse_variant(const std::string& text) {
  if (text == "ddpm") return Variant::ddpm;
  if (text == "pcm") return Variant::pcm;
  if (text == "full") return Variant::full;
  throw ConfigError("unknown variant '" + text + "' (expected ddpm, pcm or full)");
}

namespace {

void init_conv(ParamStore& params, const std::string& name, Index out, Index in,
               std::mt19937_64& rng) {
  params[name + ".w"] = fan_in_uniform({out, in, 3, 3}, in * 9, rng);
  params[name + ".b"] = fan_in_uniform({out}, in * 9, rng);
}

void init_linear(ParamStore& params, const std::string& name, Index out, Index in,
                 std::mt19937_64& rng) {
  params[name + ".w"] = fan_in_uniform({out, in}, in, rng);
  params[name + ".b"] = fan_in_uniform({out}, in, rng);
}

void init_block(ParamStore& params, const std::string& name, Index in, Index out, Index d,
                std::mt19937_64& rng) {
  init_conv(params, name + ".conv1", out, in, rng);
  init_linear(params, name + ".cond", out, d, rng);
  init_conv(params, name + ".conv2", out, out, rng);
}

Var conv(Tape& tape, const ParamStore& params, const std::string& name, Var x) {
  return ad::conv2d(x, tape.parameter(params, name + ".w"), tape.parameter(params, name + ".b"));
}

Var dense(Tape& tape, const ParamStore& params, const std::string& name, Var x) {
  return ad::linear(x, tape.parameter(params, name + ".w"), tape.parameter(params, name + ".b"));
}

Var block(Tape& tape, const ParamStore& params, const std::string& name, Var x, Var emb) {
  Var h = ad::silu(conv(tape, params, name + ".conv1", x));
  h = ad::add_channel_bias(h, dense(tape, params, name + ".cond", emb));
  return ad::silu(conv(tape, params, name + ".conv2", h));
}

}  // namespace

void init_unet(ParamStore& params, const std::string& prefix, const UNetConfig& config,
               std::mt19937_64& rng) {
  const Index d = config.d_embed;
  const auto& w = config.widths;
  if (w.empty()) throw ConfigError("UNet needs at least one level");
  init_linear(params, prefix + ".emb", d, d, rng);
  if (config.record_conditioned) init_linear(params, prefix + ".cproj", d, d, rng);
  Index in = 1;
  for (std::size_t i = 0; i < w.size(); ++i) {
    init_block(params, prefix + ".down" + std::to_string(i), in, w[i], d, rng);
    in = w[i];
  }
  for (std::size_t i = w.size() - 1; i-- > 0;) {
    init_block(params, prefix + ".up" + std::to_string(i), w[i + 1] + w[i], w[i], d, rng);
  }
  init_conv(params, prefix + ".out", 1, w[0], rng);
}

Var unet_forward(Var x, std::optional<Var> c_r, Var t_emb, const ParamStore& params,
                 const std::string& prefix, const UNetConfig& config) {
  const Shape& s = x.shape();
  const Index levels = static_cast<Index>(config.widths.size());
  if (s.size() != 4 || s[1] != 1 || s[2] != config.image_size || s[3] != config.image_size) {
    throw ShapeError(prefix + ": expected [N,1," + std::to_string(config.image_size) + "," +
                     std::to_string(config.image_size) + "], got " + to_string(s));
  }
  if (config.image_size % (Index{1} << (levels - 1)) != 0) {
    throw ShapeError(prefix + ": image size " + std::to_string(config.image_size) +
                     " not divisible across " + std::to_string(levels) + " levels");
  }
  if (t_emb.shape() != Shape{s[0], config.d_embed}) {
    throw ShapeError(prefix + ": timestep embedding " + to_string(t_emb.shape()) +
                     " does not match batch " + to_string(s));
  }
  if (config.record_conditioned != c_r.has_value()) {
    throw ConfigError(prefix + ": record conditioning " +
                      std::string(config.record_conditioned ? "required" : "not expected"));
  }
  Tape& tape = x.tape();
  Var cond = t_emb;
  if (c_r) {
    if (c_r->shape() != t_emb.shape()) {
      throw ShapeError(prefix + ": condition embedding " + to_string(c_r->shape()) + " vs " +
                       to_string(t_emb.shape()));
    }
    cond = ad::add(cond, dense(tape, params, prefix + ".cproj", *c_r));
  }
  Var emb = ad::silu(dense(tape, params, prefix + ".emb", cond));

  std::vector<Var> skips;
  Var h = x;
  for (Index i = 0; i < levels; ++i) {
    if (i > 0) h = ad::avg_pool2(h);
    h = block(tape, params, prefix + ".down" + std::to_string(i), h, emb);
    skips.push_back(h);
  }
  for (Index i = levels - 1; i-- > 0;) {
    h = ad::concat({ad::upsample2(h), skips[static_cast<std::size_t>(i)]}, 1);
    h = block(tape, params, prefix + ".up" + std::to_string(i), h, emb);
  }
  return conv(tape, params, prefix + ".out", h);
}

Var np_forward(Var x_t, std::optional<Var> c_r, Var t_emb, const ParamStore& params,
               const UNetConfig& config) {
  return unet_forward(x_t, c_r, t_emb, params, "np", config);
}

Var mpg_forward(Var x_masked, std::optional<Var> c_r, Var t_emb, const ParamStore& params,
                const UNetConfig& config) {
  return unet_forward(x_masked, c_r, t_emb, params, "mpg", config);
}

UNetConfig Model::unet_config() const {
  return {config.image_size, config.d_embed, config.unet_widths, uses_ieca()};
}

EncoderConfig Model::encoder_config() const {
  return {config.encoder_widths, config.d_embed, config.image_size, true};
}

TokenizerParams Model::tokenizer() const {
  return {schema, params.at("tok.w"), params.at("tok.b")};
}

Model init_model(const ModelConfig& config, RecordSchema schema, std::uint64_t seed) {
  if (config.d_embed <= 0 || config.d_embed % 2) {
    throw ConfigError("d_embed must be even and positive");
  }
  Model model{config, std::move(schema), {}, {}};
  model.normalizer = RecordNormalizer::identity(model.schema.size());
  // Separate streams so enabling one sub-network never perturbs another's init.
  std::mt19937_64 np_rng(seed * 4 + 1), mpg_rng(seed * 4 + 2), enc_rng(seed * 4 + 3);
  init_unet(model.params, "np", model.unet_config(), np_rng);
  if (model.uses_pcm()) init_unet(model.params, "mpg", model.unet_config(), mpg_rng);
  if (model.uses_ieca()) {
    init_encoder(model.params, "enc", model.encoder_config(), enc_rng);
    init_tokenizer(model.params, "tok", model.schema.size(), config.d_embed, enc_rng);
  }
  return model;
}

BatchCondition condition_batch(Tape& tape, const Model& model, const Tensor& images,
                               const std::vector<Tensor>& records) {
  if (images.rank() != 4 || static_cast<std::size_t>(images.dim(0)) != records.size()) {
    throw ShapeError("condition_batch: " + std::to_string(records.size()) +
                     " records for images " + to_string(images.shape()));
  }
  Var e = encode_image(tape.constant(images), model.params, "enc", model.encoder_config());
  Var tw = tape.parameter(model.params, "tok.w");
  Var tb = tape.parameter(model.params, "tok.b");
  BatchCondition out;
  std::vector<Var> rows;
  for (std::size_t n = 0; n < records.size(); ++n) {
    Var tokens = tokenize(tw, tb, records[n]);
    IecaVars r = ieca(tokens, ad::slice_rows(e, static_cast<Index>(n), 1));
    rows.push_back(r.c_r);
    out.weights.push_back(r.weights);
  }
  out.c_r = ad::concat(rows, 0);
  return out;
}

Tensor to_model_domain(const Tensor& image) {
  return Tensor(image.shape(), image.array() * 2.0 - 1.0);
}

Tensor from_model_domain(const Tensor& x) { return Tensor(x.shape(), (x.array() + 1.0) * 0.5); }

}  // namespace diff3m
