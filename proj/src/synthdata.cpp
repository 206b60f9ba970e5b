#include "diff3m/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "diff3m/pgm.hpp"
#include "diff3m/seed.hpp"

namespace diff3m {
namespace {

constexpr std::uint64_t kRecordStream = 1;
constexpr std::uint64_t kAnatomyStream = 2;
constexpr std::uint64_t kNoiseStream = 3;
constexpr std::uint64_t kBlobStream = 4;

double coverage(double signed_distance) { return std::clamp(0.5 + signed_distance, 0.0, 1.0); }

// Approximate signed distance (pixels, positive inside) to an axis-aligned
// ellipse boundary, exact along the horizontal axis through its center.
double ellipse_inside(double px, double py, double cx, double cy, double hw, double hh) {
  const double dx = (px - cx) / hw, dy = (py - cy) / hh;
  return (1.0 - std::sqrt(dx * dx + dy * dy)) * hw;
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// Values as they read back from records.csv.
std::vector<double> quantize_values(const std::vector<double>& values) {
  std::vector<double> out;
  for (double v : values) out.push_back(std::stod(format_value(v)));
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) fields.push_back(f);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

std::shared_ptr<const RecordSchema> phantom_schema() {
  static const auto schema = std::make_shared<const RecordSchema>(RecordSchema{
      {"bmi", "height", "weight", "bp_systolic", "bp_diastolic", "age", "sex", "view"},
      {"kg/m2", "cm", "kg", "mmHg", "mmHg", "years", "male=1", "ap=1"}});
  return schema;
}

PatientRecord sample_record(std::uint64_t seed, const GenConfig& config) {
  std::mt19937_64 rng(derive_seed(seed, {kRecordStream}));
  std::bernoulli_distribution coin(0.5);
  const bool male = coin(rng);
  const double height = std::normal_distribution<double>(male ? 176.0 : 163.0, 7.0)(rng);
  const double bmi_lo = config.confounded ? config.confounded_bmi_min : config.bmi_min;
  const double bmi_hi = config.confounded ? config.confounded_bmi_max : config.bmi_max;
  const double bmi = std::uniform_real_distribution<double>(bmi_lo, bmi_hi)(rng);
  const double weight =
      bmi * (height / 100.0) * (height / 100.0) + std::normal_distribution<double>(0.0, 1.5)(rng);
  const double systolic = std::normal_distribution<double>(122.0, 12.0)(rng);
  const double diastolic = 0.55 * systolic + std::normal_distribution<double>(12.0, 6.0)(rng);
  const double age = std::uniform_real_distribution<double>(20.0, 85.0)(rng);
  const bool ap_view = coin(rng);
  return make_record(phantom_schema(), {bmi, height, weight, systolic, diastolic, age,
                                        male ? 1.0 : 0.0, ap_view ? 1.0 : 0.0});
}

Anatomy derive_anatomy(const PatientRecord& record, std::uint64_t seed, const GenConfig& config) {
  const double size = static_cast<double>(config.image_size);
  const double bmi = record.values.at(record.schema->index_of("bmi"));
  std::mt19937_64 rng(derive_seed(seed, {kAnatomyStream}));
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  Anatomy a;
  a.torso_cx = (0.5 + jitter(rng)) * size;
  a.torso_cy = (0.53 + jitter(rng)) * size;
  const double half_width =
      config.torso_half_width_at_25 + config.torso_width_per_bmi * (bmi - 25.0);
  a.torso_half_width = std::clamp(half_width, 0.12, 0.47) * size;
  a.torso_half_height = config.torso_half_height * size;
  a.lung_intensity = config.lung_intensity;
  if (config.confounded) a.lung_intensity += config.confounded_lung_density_per_bmi * (bmi - 25.0);
  a.rib_phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  return a;
}

Blob sample_blob(const Anatomy& a, std::uint64_t seed, const GenConfig& config) {
  std::mt19937_64 rng(derive_seed(seed, {kBlobStream}));
  const double scale = static_cast<double>(config.image_size) / 32.0;
  const bool left = std::bernoulli_distribution(0.5)(rng);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double ux = 0, uy = 0;
  do {
    ux = unit(rng);
    uy = unit(rng);
  } while (ux * ux + uy * uy > 1.0);
  const double lung_cx = a.torso_cx + (left ? -0.5 : 0.5) * a.torso_half_width;
  const double lung_cy = a.torso_cy - 0.04 * config.image_size;
  Blob b;
  b.cx = lung_cx + 0.6 * ux * 0.36 * a.torso_half_width;
  b.cy = lung_cy + 0.6 * uy * 0.28 * config.image_size;
  b.sigma = std::uniform_real_distribution<double>(config.blob_sigma_min, config.blob_sigma_max)(rng) *
            scale;
  b.radius = config.blob_support_sigmas * b.sigma;
  b.intensity =
      std::uniform_real_distribution<double>(config.blob_amplitude_min, config.blob_amplitude_max)(rng);
  return b;
}

Tensor render_phantom(const Anatomy& a, const Blob* blob, std::uint64_t noise_seed,
                      const GenConfig& config) {
  const Index n = config.image_size;
  const double size = static_cast<double>(n);
  const double lung_hw = 0.36 * a.torso_half_width;
  const double lung_hh = 0.28 * size;
  const double lung_cy = a.torso_cy - 0.04 * size;
  const double spine_hw = config.spine_half_width * size;
  const double rib_k = 2.0 * std::numbers::pi / (config.rib_period * size);

  std::mt19937_64 rng(derive_seed(noise_seed, {kNoiseStream}));
  std::normal_distribution<double> noise(0.0, config.pixel_noise);

  Tensor img({n, n});
  for (Index y = 0; y < n; ++y) {
    for (Index x = 0; x < n; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double v = config.background;
      const double torso = coverage(
          ellipse_inside(px, py, a.torso_cx, a.torso_cy, a.torso_half_width, a.torso_half_height));
      v += torso * (config.torso_intensity - v);
      const double lung = std::max(
          coverage(ellipse_inside(px, py, a.torso_cx - 0.5 * a.torso_half_width, lung_cy, lung_hw,
                                  lung_hh)),
          coverage(ellipse_inside(px, py, a.torso_cx + 0.5 * a.torso_half_width, lung_cy, lung_hw,
                                  lung_hh)));
      const double lung_value =
          a.lung_intensity + config.rib_amplitude * std::sin(rib_k * (py - a.torso_cy) + a.rib_phase);
      v += lung * (lung_value - v);
      const double spine = coverage(spine_hw - std::abs(px - a.torso_cx)) * torso;
      v += spine * (config.spine_intensity - v);
      if (blob) {
        const double r2 = (px - blob->cx) * (px - blob->cx) + (py - blob->cy) * (py - blob->cy);
        if (r2 <= blob->radius * blob->radius) {
          v += blob->intensity * std::exp(-r2 / (2.0 * blob->sigma * blob->sigma));
        }
      }
      v += noise(rng);
      img.at(y, x) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

PhantomSample generate_sample(std::uint64_t seed, bool want_anomaly, const GenConfig& config) {
  if (config.image_size < 8) throw ConfigError("phantom image size must be at least 8");
  PhantomSample s;
  s.record = sample_record(seed, config);
  const Anatomy anatomy = derive_anatomy(s.record, seed, config);
  if (want_anomaly) s.blob = sample_blob(anatomy, seed, config);
  s.anomalous = want_anomaly;
  s.image = render_phantom(anatomy, s.blob ? &*s.blob : nullptr, seed, config);
  return s;
}

std::uint64_t sample_seed(std::uint64_t dataset_seed, const std::string& split, std::size_t index) {
  const std::uint64_t tag = split == "train" ? 11 : 13;
  return derive_seed(dataset_seed, {tag, static_cast<std::uint64_t>(index)});
}

std::string image_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu.pgm", index);
  return buf;
}

std::string DatasetManifest::serialize() const {
  std::ostringstream os;
  os << "format_version=" << format_version << '\n';
  os << "generator_seed=" << seed << '\n';
  os << "image_size=" << image_size << '\n';
  os << "confounded=" << (confounded ? 1 : 0) << '\n';
  os << "schema=";
  for (std::size_t i = 0; i < schema.size(); ++i) {
    os << (i ? ";" : "") << schema.names[i] << ':' << schema.units[i];
  }
  os << '\n';
  os << "train_normal=" << train_normal << '\n';
  os << "train_anomalous=" << train_anomalous << '\n';
  os << "test_normal=" << test_normal << '\n';
  os << "test_anomalous=" << test_anomalous << '\n';
  return os.str();
}

DatasetManifest DatasetManifest::parse(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("manifest line '" + line + "' is not key=value");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("manifest is missing '" + key + "'");
    return it->second;
  };
  DatasetManifest m;
  try {
    m.format_version = std::stoi(get("format_version"));
    if (m.format_version != 1) {
      throw DataError("unsupported dataset format version " + std::to_string(m.format_version));
    }
    m.seed = std::stoull(get("generator_seed"));
    m.image_size = std::stol(get("image_size"));
    m.confounded = get("confounded") == "1";
    m.train_normal = std::stoul(get("train_normal"));
    m.train_anomalous = std::stoul(get("train_anomalous"));
    m.test_normal = std::stoul(get("test_normal"));
    m.test_anomalous = std::stoul(get("test_anomalous"));
  } catch (const std::logic_error&) {
    throw DataError("manifest has a malformed numeric field");
  }
  std::stringstream schema(get("schema"));
  std::string entry;
  while (std::getline(schema, entry, ';')) {
    const auto colon = entry.find(':');
    m.schema.names.push_back(entry.substr(0, colon));
    m.schema.units.push_back(colon == std::string::npos ? "" : entry.substr(colon + 1));
  }
  return m;
}

DatasetSpec DatasetManifest::spec() const {
  DatasetSpec s;
  s.gen.image_size = image_size;
  s.gen.confounded = confounded;
  s.seed = seed;
  s.train_normal = train_normal;
  s.test_normal = test_normal;
  s.test_anomalous = test_anomalous;
  return s;
}

Split generate_split(const DatasetSpec& spec, const std::string& name) {
  if (name != "train" && name != "test") throw ConfigError("unknown split '" + name + "'");
  const std::size_t normals = name == "train" ? spec.train_normal : spec.test_normal;
  const std::size_t anomalies = name == "train" ? 0 : spec.test_anomalous;
  Split split;
  split.schema = phantom_schema();
  for (std::size_t i = 0; i < normals + anomalies; ++i) {
    const bool anomalous = i >= normals;
    PhantomSample s = generate_sample(sample_seed(spec.seed, name, i), anomalous, spec.gen);
    split.images.push_back(decode_pgm(encode_pgm(s.image)));
    split.records.push_back(make_record(split.schema, quantize_values(s.record.values)));
    split.labels.push_back(anomalous ? 1 : 0);
  }
  return split;
}

DatasetManifest generate_dataset(const std::filesystem::path& dir, const DatasetSpec& spec) {
  namespace fs = std::filesystem;
  std::vector<fs::path> written;
  std::vector<fs::path> created_dirs;
  auto make_dir = [&](const fs::path& p) {
    std::error_code ec;
    if (fs::exists(p, ec)) {
      if (!fs::is_directory(p, ec)) throw IoError("'" + p.string() + "' exists and is not a directory");
      return;
    }
    if (!fs::create_directories(p, ec) || ec) {
      throw IoError("cannot create directory '" + p.string() + "': " + ec.message());
    }
    created_dirs.push_back(p);
  };
  auto write = [&](const fs::path& p, const std::string& bytes) {
    write_file(p, bytes);
    written.push_back(p);
  };

  DatasetManifest m;
  m.schema = *phantom_schema();
  m.image_size = spec.gen.image_size;
  m.seed = spec.seed;
  m.confounded = spec.gen.confounded;
  m.train_normal = spec.train_normal;
  m.test_normal = spec.test_normal;
  m.test_anomalous = spec.test_anomalous;

  try {
    make_dir(dir);
    for (const std::string name : {"train", "test"}) {
      const fs::path split_dir = dir / name;
      make_dir(split_dir);
      const Split split = generate_split(spec, name);
      std::string csv;
      for (const auto& n : m.schema.names) csv += n + ",";
      csv += "label\n";
      for (std::size_t i = 0; i < split.size(); ++i) {
        write(split_dir / image_file_name(i), encode_pgm(split.images[i]));
        for (double v : split.records[i].values) csv += format_value(v) + ",";
        csv += std::to_string(split.labels[i]) + "\n";
      }
      write(split_dir / "records.csv", csv);
    }
    // Written last: its presence marks a complete dataset.
    write(dir / "manifest.txt", m.serialize());
  } catch (...) {
    std::error_code ec;
    for (const auto& p : written) fs::remove(p, ec);
    for (auto it = created_dirs.rbegin(); it != created_dirs.rend(); ++it) fs::remove(*it, ec);
    throw;
  }
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  return DatasetManifest::parse(read_file(dir / "manifest.txt"));
}

Split load_split(const std::filesystem::path& dir, const std::string& name) {
  const DatasetManifest m = read_manifest(dir);
  if (name != "train" && name != "test") throw ConfigError("unknown split '" + name + "'");
  const std::size_t normals = name == "train" ? m.train_normal : m.test_normal;
  const std::size_t anomalies = name == "train" ? m.train_anomalous : m.test_anomalous;
  const auto split_dir = dir / name;
  if (!std::filesystem::is_directory(split_dir)) {
    throw IoError("split directory '" + split_dir.string() + "' does not exist");
  }

  Split split;
  split.schema = std::make_shared<const RecordSchema>(m.schema);
  std::istringstream csv(read_file(split_dir / "records.csv"));
  std::string line;
  std::getline(csv, line);
  std::vector<std::string> header = split_csv(line);
  if (header.size() != m.schema.size() + 1 || header.back() != "label" ||
      !std::equal(m.schema.names.begin(), m.schema.names.end(), header.begin())) {
    throw DataError("'" + (split_dir / "records.csv").string() +
                    "' header does not match the manifest schema");
  }
  std::size_t counted[2] = {0, 0};
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != header.size()) {
      throw DataError("records.csv row " + std::to_string(split.size() + 1) + " has " +
                      std::to_string(fields.size()) + " fields");
    }
    std::vector<double> values;
    try {
      for (std::size_t i = 0; i + 1 < fields.size(); ++i) values.push_back(std::stod(fields[i]));
    } catch (const std::logic_error&) {
      throw DataError("records.csv row " + std::to_string(split.size() + 1) + " is not numeric");
    }
    const int label = fields.back() == "1" ? 1 : fields.back() == "0" ? 0 : -1;
    if (label < 0) throw DataError("records.csv label '" + fields.back() + "' is not 0 or 1");
    const std::size_t index = split.size();
    Tensor image = read_pgm(split_dir / image_file_name(index));
    if (image.dim(0) != m.image_size || image.dim(1) != m.image_size) {
      throw DataError("image " + image_file_name(index) + " has shape " +
                      to_string(image.shape()) + ", manifest says " + std::to_string(m.image_size));
    }
    split.images.push_back(std::move(image));
    split.records.push_back(make_record(split.schema, std::move(values)));
    split.labels.push_back(label);
    ++counted[label];
  }
  if (counted[0] != normals || counted[1] != anomalies) {
    throw DataError(name + " split holds " + std::to_string(counted[0]) + " normal / " +
                    std::to_string(counted[1]) + " anomalous samples, manifest says " +
                    std::to_string(normals) + " / " + std::to_string(anomalies));
  }
  return split;
}

}  // namespace diff3m
