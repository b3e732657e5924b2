#include "gcnet/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace gcnet {

namespace {

constexpr char kMagic[4] = {'G', 'C', 'T', '1'};

template <typename U>
void put_le(std::vector<uint8_t>& out, U value) {
  for (size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<uint8_t>(value >> (8 * b)));
}

template <typename U>
U get_le(std::span<const uint8_t> bytes, size_t& pos) {
  if (pos + sizeof(U) > bytes.size()) throw FormatError("tensor file: truncated header");
  U value = 0;
  for (size_t b = 0; b < sizeof(U); ++b) value |= static_cast<U>(bytes[pos + b]) << (8 * b);
  pos += sizeof(U);
  return value;
}

}  // namespace

std::vector<uint8_t> encode_tensor(const TensorFile& tensor) {
  if (tensor.dims.size() != 3 && tensor.dims.size() != 4) {
    throw FormatError("tensor file: rank must be 3 or 4");
  }
  uint64_t count = 1;
  for (uint64_t d : tensor.dims) count *= d;
  if (count != tensor.payload.size()) throw FormatError("tensor file: payload length != prod(dims)");

  std::vector<uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<uint32_t>(out, static_cast<uint32_t>(tensor.dims.size()));
  for (uint64_t d : tensor.dims) put_le<uint64_t>(out, d);
  out.reserve(out.size() + 4 * tensor.payload.size());
  for (float v : tensor.payload) put_le<uint32_t>(out, std::bit_cast<uint32_t>(v));
  return out;
}

TensorFile decode_tensor(std::span<const uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("tensor file: bad magic (expected GCT1)");
  }
  size_t pos = 4;
  const uint32_t rank = get_le<uint32_t>(bytes, pos);
  if (rank != 3 && rank != 4) {
    throw FormatError("tensor file: rank " + std::to_string(rank) + " not in {3, 4}");
  }
  TensorFile t;
  uint64_t count = 1;
  for (uint32_t k = 0; k < rank; ++k) {
    const uint64_t d = get_le<uint64_t>(bytes, pos);
    if (d == 0) throw FormatError("tensor file: zero-length dimension");
    if (count > (uint64_t{1} << 40) / d) throw FormatError("tensor file: dims too large");
    count *= d;
    t.dims.push_back(d);
  }
  if (bytes.size() - pos != 4 * count) {
    throw FormatError("tensor file: payload is " + std::to_string(bytes.size() - pos) +
                      " bytes, dims require " + std::to_string(4 * count));
  }
  t.payload.resize(count);
  for (uint64_t k = 0; k < count; ++k) t.payload[k] = std::bit_cast<float>(get_le<uint32_t>(bytes, pos));
  return t;
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return decode_tensor(bytes);
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& tensor) {
  const std::vector<uint8_t> bytes = encode_tensor(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

FeatureMap<double> to_feature_map(const TensorFile& tensor) {
  Spatial s;
  if (tensor.dims.size() == 3) {
    s = Spatial{static_cast<int64_t>(tensor.dims[1]), static_cast<int64_t>(tensor.dims[2]), std::nullopt};
  } else if (tensor.dims.size() == 4) {
    s = Spatial{static_cast<int64_t>(tensor.dims[2]), static_cast<int64_t>(tensor.dims[3]),
                static_cast<int64_t>(tensor.dims[1])};
  } else {
    throw FormatError("tensor file: rank must be 3 or 4");
  }
  try {
    return FeatureMap<double>(static_cast<int64_t>(tensor.dims[0]), s,
                              std::vector<double>(tensor.payload.begin(), tensor.payload.end()));
  } catch (const NumericError& e) {
    throw FormatError(std::string("tensor file: ") + e.what());
  }
}

}  // namespace gcnet
