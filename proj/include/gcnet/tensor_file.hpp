#pragma once

// Binary tensor files:
//   magic   4 bytes  "GCT1"
//   rank    u32 LE   3 or 4
//   dims    rank x u64 LE   [C, H, W] or [C, T, H, W]
//   payload prod(dims) x f32 LE, row-major (channel-major for feature maps)

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gcnet/tensor.hpp"

namespace gcnet {

struct TensorFile {
  std::vector<uint64_t> dims;
  std::vector<float> payload;

  bool operator==(const TensorFile&) const = default;
};

std::vector<uint8_t> encode_tensor(const TensorFile& tensor);
// Throws FormatError on bad magic, rank, or payload length.
TensorFile decode_tensor(std::span<const uint8_t> bytes);

TensorFile read_tensor_file(const std::filesystem::path& path);
void write_tensor_file(const std::filesystem::path& path, const TensorFile& tensor);

FeatureMap<double> to_feature_map(const TensorFile& tensor);

// Storage is always 32-bit; wider maps are rounded to nearest.
template <typename T>
TensorFile to_tensor_file(const FeatureMap<T>& map) {
  TensorFile t;
  const Spatial& s = map.spatial();
  t.dims.push_back(static_cast<uint64_t>(map.channels()));
  if (s.frames) t.dims.push_back(static_cast<uint64_t>(*s.frames));
  t.dims.push_back(static_cast<uint64_t>(s.height));
  t.dims.push_back(static_cast<uint64_t>(s.width));
  t.payload.reserve(map.data().size());
  for (T v : map.data()) t.payload.push_back(static_cast<float>(v));
  return t;
}

}  // namespace gcnet
