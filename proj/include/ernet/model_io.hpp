#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ernet/model.hpp"

namespace ernet {

// Model file layout:
//   8 bytes   magic "ERNETv01"
//   4 bytes   header length L (uint32, little-endian)
//   L bytes   header text: one "key value..." record per line
//   4·N bytes parameters as little-endian float32, in parameters() order
//   4 bytes   CRC-32 of the parameter bytes (little-endian)
inline constexpr char kModelMagic[8] = {'E', 'R', 'N', 'E', 'T', 'v', '0', '1'};

/// Text header describing the graph: name, variant, input, classes,
/// precision, the layer list and every parameter with its shape.
template <typename T>
std::string model_header(const ModelGraph<T>& g);

template <typename T>
std::vector<std::uint8_t> serialize_model(const ModelGraph<T>& g);

template <typename T>
ModelGraph<T> deserialize_model(std::span<const std::uint8_t> bytes, Rng& rng);

template <typename T>
void save_model(const ModelGraph<T>& g, const std::filesystem::path& path);

/// Rebuilds the graph named in the header and fills it from the payload.
/// Bad magic, checksum mismatch, truncation or a header that does not match
/// the rebuilt graph raise FormatError.
template <typename T>
ModelGraph<T> load_model(const std::filesystem::path& path, Rng& rng);

/// Size in bytes of the float32 parameter payload.
template <typename T>
std::size_t model_payload_bytes(const ModelGraph<T>& g) {
  return 4 * param_count(g).total();
}

std::uint32_t crc32_bytes(std::span<const std::uint8_t> bytes);

}  // namespace ernet
