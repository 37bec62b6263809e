#pragma once

#include "fabnet/tensor.hpp"

#include <cstdint>
#include <string>

namespace fabnet {

/// 0 = defect-free, 1 = color spot, 2 = misprint.
enum class ClassLabel : std::uint8_t { defect_free = 0, color_spot = 1, misprint = 2 };

inline constexpr std::size_t class_count = 3;

/// Throws DataError unless value is 0, 1 or 2.
ClassLabel to_class_label(long long value);
inline std::size_t index_of(ClassLabel label) { return static_cast<std::size_t>(label); }
std::string class_name(ClassLabel label);

enum class Provenance { original, augmented, synthetic };

std::string provenance_name(Provenance p);
Provenance parse_provenance(const std::string& text);

/// One labelled image, [C,H,W] with values in [0,1].
struct Sample {
  Tensor image;
  ClassLabel label = ClassLabel::defect_free;
  std::string source_id;
  Provenance provenance = Provenance::original;
};

} // namespace fabnet
