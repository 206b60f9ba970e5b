#include "diff3m/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace diff3m {

std::string encode_pgm(const Tensor& image) {
  if (image.rank() != 2) throw ShapeError("pgm: expected [H,W] image, got " + to_string(image.shape()));
  std::string out = "P5\n" + std::to_string(image.dim(1)) + " " + std::to_string(image.dim(0)) +
                    "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + static_cast<std::size_t>(image.size()));
  for (Index i = 0; i < image.size(); ++i) {
    const double v = std::clamp(image[i], 0.0, 1.0);
    out[header + static_cast<std::size_t>(i)] = static_cast<char>(std::lround(v * 255.0));
  }
  return out;
}

Tensor decode_pgm(const std::string& bytes, const std::string& origin) {
  std::istringstream in(bytes);
  std::string magic;
  Index width = 0, height = 0;
  int maxval = 0;
  auto next_token = [&](auto& value) {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      in >> std::ws;
    }
    in >> value;
  };
  next_token(magic);
  next_token(width);
  next_token(height);
  next_token(maxval);
  if (!in || magic != "P5" || width <= 0 || height <= 0 || maxval != 255) {
    throw DataError(origin + ": not an 8-bit binary PGM");
  }
  in.get();
  const auto offset = static_cast<std::size_t>(in.tellg());
  if (bytes.size() < offset + static_cast<std::size_t>(width * height)) {
    throw DataError(origin + ": truncated PGM payload");
  }
  Tensor image({height, width});
  for (Index i = 0; i < image.size(); ++i) {
    image[i] = static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)]) / 255.0;
  }
  return image;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  write_file(path, encode_pgm(image));
}

Tensor read_pgm(const std::filesystem::path& path) {
  return decode_pgm(read_file(path), path.string());
}

Tensor normalize_min_max(const Tensor& image) {
  const double lo = image.array().minCoeff();
  const double hi = image.array().maxCoeff();
  if (hi <= lo) return Tensor::zeros(image.shape());
  return Tensor(image.shape(), (image.array() - lo) / (hi - lo));
}

}  // namespace diff3m
