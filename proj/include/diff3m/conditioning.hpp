#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "diff3m/autodiff.hpp"

namespace diff3m {

/// Ordered feature names (and units) of a tabular record.
struct RecordSchema {
  std::vector<std::string> names;
  std::vector<std::string> units;

  std::size_t size() const { return names.size(); }
  /// Position of `name`; throws DataError when absent.
  std::size_t index_of(const std::string& name) const;
  bool operator==(const RecordSchema& other) const { return names == other.names; }
};

/// One row of numeric clinical features. Categorical flags are pre-encoded as 0/1.
struct PatientRecord {
  std::shared_ptr<const RecordSchema> schema;
  std::vector<double> values;
};

/// Validates length and finiteness; throws DataError.
PatientRecord make_record(std::shared_ptr<const RecordSchema> schema, std::vector<double> values);

/// Parses "name=value,name=value" against a schema; every feature must appear once.
PatientRecord parse_record(std::shared_ptr<const RecordSchema> schema, const std::string& text);

/// Per-feature affine tokenizer: token j = value_j * weight_j + bias_j, giving one
/// token per feature. weight and bias are [f, d].
struct TokenizerParams {
  RecordSchema schema;
  Tensor weight;
  Tensor bias;
};

/// Plain (non-tracked) tokenization; F is [f, d].
Tensor tokenize_record(const PatientRecord& record, const TokenizerParams& params);

/// Tracked tokenization of already-validated values [f].
Var tokenize(Var weight, Var bias, const Tensor& values);

/// IECA output for one record/image pair.
struct ConditionEmbedding {
  Tensor c_r;      // [1, d]
  Tensor weights;  // [f]
  Tensor e;        // [1, d]
};

struct IecaVars {
  Var c_r;      // [1, d]
  Var weights;  // [f, 1]
};

/// w = softmax(F e^T / sqrt(d)) over tokens, c_r = w^T F.
IecaVars ieca(Var tokens, Var embedding);
ConditionEmbedding ieca(const Tensor& tokens, const Tensor& embedding);

/// Small conv encoder: per width, conv3x3 -> SiLU -> 2x average pool; then
/// global average pool and an affine map to d.
struct EncoderConfig {
  std::vector<Index> widths{8, 16, 32};
  Index d_embed = 64;
  Index image_size = 32;
  bool use_bias = true;
};

void init_encoder(ParamStore& params, const std::string& prefix, const EncoderConfig& config,
                  std::mt19937_64& rng);
/// x: [N,1,H,W] -> [N,d].
Var encode_image(Var x, const ParamStore& params, const std::string& prefix,
                 const EncoderConfig& config);
/// Untracked single/batched form; x is [H,W] or [N,1,H,W]. Returns [N,d].
Tensor encode_image(const Tensor& x, const ParamStore& params, const std::string& prefix,
                    const EncoderConfig& config);

void init_tokenizer(ParamStore& params, const std::string& prefix, std::size_t features,
                    Index d_embed, std::mt19937_64& rng);

/// Sinusoidal embedding: element 2k = sin(t / 10000^(2k/d)), 2k+1 = cos(same).
Tensor timestamp_embedding(int t, Index d);
/// One row per entry of `steps`: [N, d].
Tensor timestamp_embeddings(const std::vector<int>& steps, Index d);

/// Per-feature standardization fitted on training records.
struct RecordNormalizer {
  Tensor mean;  // [f]
  Tensor scale; // [f], strictly positive

  static RecordNormalizer fit(const std::vector<PatientRecord>& records);
  static RecordNormalizer identity(std::size_t features);
  Tensor apply(const PatientRecord& record) const;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
Tensor fan_in_uniform(Shape shape, Index fan_in, std::mt19937_64& rng);

}  // namespace diff3m
