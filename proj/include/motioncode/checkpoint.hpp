#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "motioncode/tensor.hpp"

namespace motioncode {

/// Named float32 tensor as stored on disk.
struct StoredTensor {
  std::string name;
  Shape dims;
  std::vector<float> values;
};

inline constexpr char kCheckpointMagic[4] = {'M', 'O', 'C', 'D'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (all integers uint32 little-endian):
///   "MOCD" version count
///   per tensor: name_length name rank dims... payload (float32 LE)
void write_tensor_file(const std::filesystem::path& path, std::span<const StoredTensor> tensors);

/// Reads and validates the whole file before returning anything. Bad magic,
/// version mismatch, or truncation raise FormatError.
std::vector<StoredTensor> read_tensor_file(const std::filesystem::path& path);
std::vector<StoredTensor> parse_tensor_file(std::span<const unsigned char> bytes, const std::string& source);

}  // namespace motioncode
