#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "diff3m/training.hpp"

namespace diff3m {

/// Trained model plus the configuration that produced it.
///
/// On disk: "D3M1", u32 format version, u32 metadata length, UTF-8 key=value
/// metadata lines, then until EOF one record per tensor: u32 name length, name,
/// u32 rank, rank x u32 dims, little-endian f32 payload. Parameters are written
/// in name order; the record normalizer is stored as norm.mean / norm.std.
struct Checkpoint {
  TrainConfig config;
  Model model;
  std::size_t iteration = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws DataError for bad magic, unknown versions, truncation, or tensors that
/// do not match the architecture described by the metadata.
Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin = "<memory>");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Metadata block of a serialized checkpoint, for inspection.
std::map<std::string, std::string> checkpoint_metadata(const std::string& bytes);

/// The tensor section (everything after the metadata block).
std::string checkpoint_tensor_section(const std::string& bytes);

}  // namespace diff3m
