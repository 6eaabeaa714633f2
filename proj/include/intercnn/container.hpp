#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "intercnn/tensor.hpp"

namespace icnn {

/// Named tensors; iteration (and on-disk) order is by name.
using TensorMap = std::map<std::string, Tensor>;

inline constexpr char kContainerMagic[4] = {'I', 'C', 'T', 'N'};
inline constexpr std::uint16_t kContainerVersion = 1;

/// Little-endian layout: "ICTN", u16 version, u32 entry count, then per entry
/// u16 name length, UTF-8 name, u8 dtype (0=f32, 1=f64), u8 rank,
/// rank x u64 dims, row-major payload.
std::vector<std::uint8_t> encode_container(const TensorMap& entries);
/// Throws FormatError carrying the byte offset of the first bad field.
TensorMap decode_container(const std::vector<std::uint8_t>& bytes);

void write_container(const TensorMap& entries, const std::filesystem::path& path);
TensorMap read_container(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace icnn
