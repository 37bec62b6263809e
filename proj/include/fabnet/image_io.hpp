#pragma once

#include "fabnet/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fabnet {

/// Decodes an 8-bit RGB PNG into [3,H,W] with channel values v/255.
/// Throws IoError on decode failure and DataError for non-RGB images.
Tensor load_image(const std::filesystem::path& path);
Tensor decode_png(std::span<const std::uint8_t> bytes);

/// Encodes [3,H,W] as 8-bit RGB, quantizing with round-half-up after
/// clamping to [0,1].
void write_image(const Tensor& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Tensor& image);

/// round-half-up quantization used by the encoder.
std::uint8_t quantize_channel(double value);

} // namespace fabnet
