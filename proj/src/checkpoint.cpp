#include "diff3m/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "diff3m/pgm.hpp"

namespace diff3m {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<Index>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (Index d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  const Tensor32 f = t.cast<float>();
  out.append(reinterpret_cast<const char*>(f.data()), static_cast<std::size_t>(f.size()) * 4);
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

  std::string take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw DataError(origin_ + ": checkpoint truncated while reading " + what);
    }
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32(const char* what) {
    const std::string s = take(4, what);
    std::uint32_t v;
    std::memcpy(&v, s.data(), 4);
    return v;
  }

  const std::string& origin() const { return origin_; }

 private:
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::map<std::string, std::string> parse_metadata(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> meta;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(origin + ": malformed metadata line '" + line + "'");
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

// Reads magic, version and metadata; leaves the reader at the tensor section.
std::map<std::string, std::string> read_header(Reader& r) {
  if (r.take(4, "magic") != "D3M1") throw DataError(r.origin() + ": not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw DataError(r.origin() + ": unsupported checkpoint format version " + std::to_string(version));
  }
  const std::uint32_t len = r.u32("metadata length");
  return parse_metadata(r.take(len, "metadata"), r.origin());
}

const std::string& field(const std::map<std::string, std::string>& meta, const std::string& key,
                         const std::string& origin) {
  auto it = meta.find(key);
  if (it == meta.end()) throw DataError(origin + ": checkpoint metadata lacks '" + key + "'");
  return it->second;
}

template <typename T>
T parse_number(const std::string& text, const std::string& key, const std::string& origin) {
  try {
    std::size_t used = 0;
    T v;
    if constexpr (std::is_floating_point_v<T>) {
      v = static_cast<T>(std::stod(text, &used));
    } else {
      v = static_cast<T>(std::stoull(text, &used));
    }
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::logic_error&) {
    throw DataError(origin + ": bad value '" + text + "' for checkpoint key '" + key + "'");
  }
}

std::vector<Index> parse_widths(const std::string& text, const std::string& origin) {
  std::vector<Index> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_number<Index>(item, "widths", origin));
  return out;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const TrainConfig& c = ckpt.config;
  const Model& m = ckpt.model;
  std::string schema;
  for (std::size_t i = 0; i < m.schema.size(); ++i) {
    schema += (i ? ";" : "") + m.schema.names[i] + ':' + m.schema.units[i];
  }
  std::string meta;
  auto kv = [&](const std::string& k, const std::string& v) { meta += k + '=' + v + '\n'; };
  kv("T", std::to_string(c.steps_T));
  kv("beta_start", num(c.beta_start));
  kv("beta_end", num(c.beta_end));
  kv("lambda", num(c.lambda));
  kv("lr", num(c.learning_rate));
  kv("batch_size", std::to_string(c.batch_size));
  kv("iters", std::to_string(c.iterations));
  kv("iteration", std::to_string(ckpt.iteration));
  kv("seed", std::to_string(c.seed));
  kv("phase", to_string(c.phase));
  kv("variant", to_string(m.config.variant));
  kv("image_size", std::to_string(m.config.image_size));
  kv("d_embed", std::to_string(m.config.d_embed));
  kv("unet_widths", join(m.config.unet_widths));
  kv("encoder_widths", join(m.config.encoder_widths));
  kv("schema", schema);

  std::string out = "D3M1";
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  for (const auto& [name, t] : m.params) put_tensor(out, name, t);
  put_tensor(out, "norm.mean", m.normalizer.mean);
  put_tensor(out, "norm.std", m.normalizer.scale);
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin) {
  Reader r(bytes, origin);
  const auto meta = read_header(r);
  auto get = [&](const std::string& k) -> const std::string& { return field(meta, k, origin); };

  Checkpoint ck;
  TrainConfig& c = ck.config;
  c.steps_T = parse_number<int>(get("T"), "T", origin);
  c.beta_start = parse_number<double>(get("beta_start"), "beta_start", origin);
  c.beta_end = parse_number<double>(get("beta_end"), "beta_end", origin);
  c.lambda = parse_number<double>(get("lambda"), "lambda", origin);
  c.learning_rate = parse_number<double>(get("lr"), "lr", origin);
  c.batch_size = parse_number<std::size_t>(get("batch_size"), "batch_size", origin);
  c.iterations = parse_number<std::size_t>(get("iters"), "iters", origin);
  c.seed = parse_number<std::uint64_t>(get("seed"), "seed", origin);
  ck.iteration = parse_number<std::size_t>(get("iteration"), "iteration", origin);
  try {
    c.phase = parse_phase(get("phase"));
    c.model.variant = parse_variant(get("variant"));
  } catch (const ConfigError& e) {
    throw DataError(origin + ": " + e.what());
  }
  c.model.image_size = parse_number<Index>(get("image_size"), "image_size", origin);
  c.model.d_embed = parse_number<Index>(get("d_embed"), "d_embed", origin);
  c.model.unet_widths = parse_widths(get("unet_widths"), origin);
  c.model.encoder_widths = parse_widths(get("encoder_widths"), origin);

  RecordSchema schema;
  std::istringstream in(get("schema"));
  std::string entry;
  while (std::getline(in, entry, ';')) {
    const auto colon = entry.find(':');
    schema.names.push_back(entry.substr(0, colon));
    schema.units.push_back(colon == std::string::npos ? "" : entry.substr(colon + 1));
  }

  try {
    c.validate();
    ck.model = init_model(c.model, schema, 0);
  } catch (const ConfigError& e) {
    throw DataError(origin + ": invalid checkpoint configuration: " + e.what());
  }

  std::map<std::string, Tensor> tensors;
  while (!r.done()) {
    const std::uint32_t name_len = r.u32("tensor name length");
    std::string name = r.take(name_len, "tensor name");
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank > 8) throw DataError(origin + ": tensor '" + name + "' has implausible rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<Index>(r.u32("tensor dims")));
    const Index n = shape_size(shape);
    const std::string payload = r.take(static_cast<std::size_t>(n) * 4, "tensor payload");
    Tensor32 f(shape);
    std::memcpy(f.data(), payload.data(), payload.size());
    if (!tensors.emplace(name, f.cast<double>()).second) {
      throw DataError(origin + ": duplicate tensor '" + name + "'");
    }
  }

  auto take_tensor = [&](const std::string& name, const Shape& expected) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError(origin + ": checkpoint lacks tensor '" + name + "'");
    if (it->second.shape() != expected) {
      throw DataError(origin + ": tensor '" + name + "' has shape " + to_string(it->second.shape()) +
                      ", expected " + to_string(expected));
    }
    Tensor t = std::move(it->second);
    tensors.erase(it);
    return t;
  };
  for (auto& [name, t] : ck.model.params) t = take_tensor(name, t.shape());
  const Shape fshape{static_cast<Index>(schema.size())};
  ck.model.normalizer.mean = take_tensor("norm.mean", fshape);
  ck.model.normalizer.scale = take_tensor("norm.std", fshape);
  if (!tensors.empty()) throw DataError(origin + ": unexpected tensor '" + tensors.begin()->first + "'");
  if ((ck.model.normalizer.scale.array() <= 0.0).any()) {
    throw DataError(origin + ": non-positive record scale");
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path), path.string());
}

std::map<std::string, std::string> checkpoint_metadata(const std::string& bytes) {
  Reader r(bytes, "<memory>");
  return read_header(r);
}

std::string checkpoint_tensor_section(const std::string& bytes) {
  Reader r(bytes, "<memory>");
  read_header(r);
  return bytes.substr(r.pos());
}

}  // namespace diff3m
