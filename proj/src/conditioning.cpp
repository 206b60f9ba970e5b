#include "diff3m/conditioning.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace diff3m {

std::size_t RecordSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw DataError("feature '" + name + "' is not in the record schema");
}

PatientRecord make_record(std::shared_ptr<const RecordSchema> schema, std::vector<double> values) {
  if (!schema) throw DataError("record has no schema");
  if (values.size() != schema->size()) {
    throw DataError("record has " + std::to_string(values.size()) + " values, schema has " +
                    std::to_string(schema->size()) + " features");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw DataError("record feature '" + schema->names[i] + "' is not finite");
    }
  }
  return PatientRecord{std::move(schema), std::move(values)};
}

PatientRecord parse_record(std::shared_ptr<const RecordSchema> schema, const std::string& text) {
  std::map<std::string, double> parsed;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw DataError("record entry '" + item + "' is not name=value");
    const std::string name = item.substr(0, eq);
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw DataError("record entry '" + item + "' has a non-numeric value");
    }
    if (!parsed.emplace(name, value).second) {
      throw DataError("record feature '" + name + "' given twice");
    }
  }
  std::vector<double> values;
  for (const auto& name : schema->names) {
    auto it = parsed.find(name);
    if (it == parsed.end()) throw DataError("record is missing feature '" + name + "'");
    values.push_back(it->second);
    parsed.erase(it);
  }
  if (!parsed.empty()) {
    throw DataError("record feature '" + parsed.begin()->first + "' is not in the schema");
  }
  return make_record(std::move(schema), std::move(values));
}

Tensor tokenize_record(const PatientRecord& record, const TokenizerParams& params) {
  if (!record.schema || !(*record.schema == params.schema)) {
    throw DataError("record schema does not match the tokenizer schema");
  }
  const Index f = static_cast<Index>(record.values.size());
  if (params.weight.rank() != 2 || params.weight.dim(0) != f ||
      params.weight.shape() != params.bias.shape()) {
    throw ShapeError("tokenizer parameters " + to_string(params.weight.shape()) + " / " +
                     to_string(params.bias.shape()) + " do not fit " + std::to_string(f) +
                     " features");
  }
  Tensor tokens(params.weight.shape());
  const Eigen::Map<const Eigen::VectorXd> v(record.values.data(), f);
  tokens.matrix() = v.asDiagonal() * params.weight.matrix() + params.bias.matrix();
  return tokens;
}

Var tokenize(Var weight, Var bias, const Tensor& values) {
  Var v = weight.tape().constant(values.reshaped({values.size(), 1}));
  return ad::add(ad::scale_rows(weight, v), bias);
}

IecaVars ieca(Var tokens, Var embedding) {
  const Shape& fs = tokens.shape();
  const Shape& es = embedding.shape();
  if (fs.size() != 2 || es.size() != 2 || es[0] != 1 || es[1] != fs[1]) {
    throw ShapeError("ieca: tokens " + to_string(fs) + " incompatible with embedding " +
                     to_string(es));
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(fs[1]));
  Var logits = ad::mul_scalar(ad::matmul(tokens, ad::transpose(embedding)), inv_sqrt_d);
  Var weights = ad::softmax(logits, 0);
  Var c_r = ad::matmul(ad::transpose(weights), tokens);
  return {c_r, weights};
}

ConditionEmbedding ieca(const Tensor& tokens, const Tensor& embedding) {
  Tape tape(false);
  IecaVars out = ieca(tape.constant(tokens), tape.constant(embedding));
  return {out.c_r.value(), out.weights.value().reshaped({tokens.dim(0)}), embedding};
}

Tensor fan_in_uniform(Shape shape, Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

void init_encoder(ParamStore& params, const std::string& prefix, const EncoderConfig& config,
                  std::mt19937_64& rng) {
  Index in = 1;
  for (std::size_t i = 0; i < config.widths.size(); ++i) {
    const Index out = config.widths[i];
    const std::string name = prefix + ".conv" + std::to_string(i);
    params[name + ".w"] = fan_in_uniform({out, in, 3, 3}, in * 9, rng);
    if (config.use_bias) params[name + ".b"] = fan_in_uniform({out}, in * 9, rng);
    in = out;
  }
  params[prefix + ".proj.w"] = fan_in_uniform({config.d_embed, in}, in, rng);
  if (config.use_bias) params[prefix + ".proj.b"] = fan_in_uniform({config.d_embed}, in, rng);
}

Var encode_image(Var x, const ParamStore& params, const std::string& prefix,
                 const EncoderConfig& config) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != config.image_size || s[3] != config.image_size) {
    throw ShapeError("encode_image: expected [N,1," + std::to_string(config.image_size) + "," +
                     std::to_string(config.image_size) + "], got " + to_string(s));
  }
  Tape& tape = x.tape();
  Var h = x;
  for (std::size_t i = 0; i < config.widths.size(); ++i) {
    const std::string name = prefix + ".conv" + std::to_string(i);
    Var w = tape.parameter(params, name + ".w");
    h = config.use_bias ? ad::conv2d(h, w, tape.parameter(params, name + ".b")) : ad::conv2d(h, w);
    h = ad::avg_pool2(ad::silu(h));
  }
  h = ad::global_avg_pool(h);
  Var pw = tape.parameter(params, prefix + ".proj.w");
  return config.use_bias ? ad::linear(h, pw, tape.parameter(params, prefix + ".proj.b"))
                         : ad::linear(h, pw);
}

Tensor encode_image(const Tensor& x, const ParamStore& params, const std::string& prefix,
                    const EncoderConfig& config) {
  Tape tape(false);
  Tensor batch = x.rank() == 2 ? x.reshaped({1, 1, x.dim(0), x.dim(1)}) : x;
  return encode_image(tape.constant(std::move(batch)), params, prefix, config).value();
}

void init_tokenizer(ParamStore& params, const std::string& prefix, std::size_t features,
                    Index d_embed, std::mt19937_64& rng) {
  const Index f = static_cast<Index>(features);
  params[prefix + ".w"] = fan_in_uniform({f, d_embed}, 1, rng);
  params[prefix + ".b"] = fan_in_uniform({f, d_embed}, 1, rng);
}

Tensor timestamp_embedding(int t, Index d) { return timestamp_embeddings({t}, d); }

Tensor timestamp_embeddings(const std::vector<int>& steps, Index d) {
  if (d <= 0 || d % 2 != 0) {
    throw ConfigError("timestamp embedding width must be even and positive, got " +
                      std::to_string(d));
  }
  Tensor out({static_cast<Index>(steps.size()), d});
  for (std::size_t n = 0; n < steps.size(); ++n) {
    for (Index k = 0; k < d / 2; ++k) {
      const double freq = std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(d));
      const double arg = steps[n] / freq;
      out.at(static_cast<Index>(n), 2 * k) = std::sin(arg);
      out.at(static_cast<Index>(n), 2 * k + 1) = std::cos(arg);
    }
  }
  return out;
}

RecordNormalizer RecordNormalizer::fit(const std::vector<PatientRecord>& records) {
  if (records.empty()) throw DataError("cannot fit record normalization on zero records");
  const Index f = static_cast<Index>(records.front().values.size());
  Eigen::ArrayXd mean = Eigen::ArrayXd::Zero(f), var = Eigen::ArrayXd::Zero(f);
  for (const auto& r : records) {
    if (static_cast<Index>(r.values.size()) != f) throw DataError("records differ in feature count");
    mean += Eigen::Map<const Eigen::ArrayXd>(r.values.data(), f);
  }
  const double n = static_cast<double>(records.size());
  mean /= n;
  for (const auto& r : records) var += (Eigen::Map<const Eigen::ArrayXd>(r.values.data(), f) - mean).square();
  var /= n;
  // Constant features keep unit scale.
  Eigen::ArrayXd scale = (var > 1e-12).select(var.sqrt(), 1.0);
  return {Tensor({f}, mean), Tensor({f}, scale)};
}

RecordNormalizer RecordNormalizer::identity(std::size_t features) {
  const Index f = static_cast<Index>(features);
  return {Tensor::zeros({f}), Tensor::ones({f})};
}

Tensor RecordNormalizer::apply(const PatientRecord& record) const {
  const Index f = static_cast<Index>(record.values.size());
  if (f != mean.size()) {
    throw DataError("record has " + std::to_string(f) + " features, normalizer expects " +
                    std::to_string(mean.size()));
  }
  const Eigen::Map<const Eigen::ArrayXd> v(record.values.data(), f);
  return Tensor({f}, (v - mean.array()) / scale.array());
}

}  // namespace diff3m
