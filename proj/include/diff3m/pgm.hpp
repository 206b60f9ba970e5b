#pragma once

#include <filesystem>
#include <string>

#include "diff3m/tensor.hpp"

namespace diff3m {

/// Binary 8-bit portable graymap (P5). Values in [0,1] are clamped and rounded
/// to 0..255 on write and divided by 255 on read. Images are [H,W].
std::string encode_pgm(const Tensor& image);
Tensor decode_pgm(const std::string& bytes, const std::string& origin = "<memory>");

void write_pgm(const std::filesystem::path& path, const Tensor& image);
Tensor read_pgm(const std::filesystem::path& path);

/// Min-max normalizes to [0,1] (all-equal input maps to zeros) for visualization.
Tensor normalize_min_max(const Tensor& image);

/// Whole-file helpers that throw IoError naming the path.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace diff3m
