#pragma once

#include "fabnet/model.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fabnet {

/// Checkpoint layout (all integers little-endian):
///
///   "FSCK"  u16 version  u32 spec_length  spec_text[spec_length]
///   f64 buffer per parameter in spec order
///   u32 CRC-32 of every preceding byte
inline constexpr std::uint16_t checkpoint_version = 1;

std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
/// Also rejects a checkpoint whose embedded spec differs from `expected`.
Model load_checkpoint(const std::filesystem::path& path, const ModelSpec& expected);

} // namespace fabnet
