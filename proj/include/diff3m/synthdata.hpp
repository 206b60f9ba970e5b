#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "diff3m/conditioning.hpp"

namespace diff3m {

/// Procedural chest phantom settings. Geometry is in fractions of the image
/// side unless noted; blob sizes are in pixels at 32x32 and scale with size.
struct GenConfig {
  Index image_size = 32;
  /// Widens the BMI range and couples lung density to BMI, so normal anatomy
  /// varies more than an image-only model can explain.
  bool confounded = false;

  double bmi_min = 18.0;
  double bmi_max = 35.0;
  double confounded_bmi_min = 15.0;
  double confounded_bmi_max = 45.0;

  double background = 0.08;
  double torso_intensity = 0.62;
  double torso_half_width_at_25 = 0.28;  // torso half-width at BMI 25
  double torso_width_per_bmi = 0.008;    // added half-width per BMI unit
  double torso_half_height = 0.40;
  double lung_intensity = 0.24;
  double confounded_lung_density_per_bmi = 0.012;
  double rib_amplitude = 0.06;
  double rib_period = 0.11;
  double spine_intensity = 0.78;
  double spine_half_width = 0.05;
  double pixel_noise = 0.01;

  double blob_amplitude_min = 0.35;
  double blob_amplitude_max = 0.50;
  double blob_sigma_min = 1.2;
  double blob_sigma_max = 2.0;
  double blob_support_sigmas = 2.5;
};

/// bmi, height, weight, bp_systolic, bp_diastolic, age, sex, view.
std::shared_ptr<const RecordSchema> phantom_schema();

/// Geometry of one phantom, in pixels.
struct Anatomy {
  double torso_cx = 0, torso_cy = 0;
  double torso_half_width = 0, torso_half_height = 0;
  double lung_intensity = 0;
  double rib_phase = 0;
};

/// Anomaly descriptor: a truncated Gaussian added inside a lung.
struct Blob {
  double cx = 0, cy = 0;
  double sigma = 0;
  double radius = 0;  // support radius; pixels farther away are untouched
  double intensity = 0;
};

struct PhantomSample {
  Tensor image;  // [H,W] in [0,1]
  PatientRecord record;
  bool anomalous = false;
  std::optional<Blob> blob;
};

PatientRecord sample_record(std::uint64_t seed, const GenConfig& config);
/// Deterministic in (record, seed); torso width depends on BMI only.
Anatomy derive_anatomy(const PatientRecord& record, std::uint64_t seed, const GenConfig& config);
Blob sample_blob(const Anatomy& anatomy, std::uint64_t seed, const GenConfig& config);
Tensor render_phantom(const Anatomy& anatomy, const Blob* blob, std::uint64_t noise_seed,
                      const GenConfig& config);

/// With the same seed, the anomalous and normal samples share record, anatomy
/// and noise; they differ only by the blob.
PhantomSample generate_sample(std::uint64_t seed, bool want_anomaly, const GenConfig& config);

struct DatasetSpec {
  GenConfig gen;
  std::uint64_t seed = 0;
  std::size_t train_normal = 2000;
  std::size_t test_normal = 200;
  std::size_t test_anomalous = 200;
};

struct DatasetManifest {
  int format_version = 1;
  RecordSchema schema;
  Index image_size = 32;
  std::uint64_t seed = 0;
  bool confounded = false;
  std::size_t train_normal = 0;
  std::size_t train_anomalous = 0;
  std::size_t test_normal = 0;
  std::size_t test_anomalous = 0;

  std::string serialize() const;
  static DatasetManifest parse(const std::string& text);
  DatasetSpec spec() const;
};

/// In-memory split. labels: 0 normal, 1 anomalous.
struct Split {
  std::shared_ptr<const RecordSchema> schema;
  std::vector<Tensor> images;
  std::vector<PatientRecord> records;
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
};

/// Seed of sample `index` in split "train" or "test".
std::uint64_t sample_seed(std::uint64_t dataset_seed, const std::string& split, std::size_t index);

Split generate_split(const DatasetSpec& spec, const std::string& name);

/// Writes <dir>/manifest.txt, <dir>/{train,test}/records.csv and one PGM per
/// sample. On failure the files written so far are removed.
DatasetManifest generate_dataset(const std::filesystem::path& dir, const DatasetSpec& spec);
DatasetManifest read_manifest(const std::filesystem::path& dir);
/// Loads and validates a split against the manifest. Throws IoError for
/// missing files and DataError for contract violations.
Split load_split(const std::filesystem::path& dir, const std::string& name);

std::string image_file_name(std::size_t index);

}  // namespace diff3m
