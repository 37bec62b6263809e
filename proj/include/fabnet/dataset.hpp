#pragma once

#include "fabnet/sample.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fabnet {

enum class SplitTag { train, val, test };

std::string split_name(SplitTag tag);
SplitTag parse_split(const std::string& text);

struct ManifestRecord {
  std::string path;  // relative to the manifest's directory
  ClassLabel label = ClassLabel::defect_free;
  Provenance provenance = Provenance::original;
  std::optional<SplitTag> split;

  bool operator==(const ManifestRecord&) const = default;
};

/// CSV with header `path,label,provenance,split`; paths unique. Lines
/// starting with '#' are annotations (the augment marker lives there).
struct Manifest {
  std::vector<ManifestRecord> records;
  std::vector<std::string> annotations;

  /// Throws DataError on duplicate paths.
  void check() const;

  std::string to_csv() const;
  static Manifest parse(const std::string& text, const std::string& origin = "<manifest>");
  static Manifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::vector<std::size_t> indices_with(SplitTag tag) const;
};

using SplitRatios = std::array<double, 3>;  // train, val, test
inline constexpr SplitRatios default_ratios{0.4, 0.3, 0.3};

/// Record indices (ascending) of each partition.
struct SplitResult {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Partition sizes: val = round(N*r_val), test = round(N*r_test), train takes
/// the rest. Throws ConfigError for ratios that are negative or do not sum
/// to 1, DataError when N >= 3 and some partition would be empty.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios);

/// Stratified seeded split. Global partition sizes follow split_sizes; each
/// class receives floor or ceil of its proportional share of every
/// partition. Within a class the members are shuffled and cut contiguously.
SplitResult split(std::span<const ClassLabel> labels, const SplitRatios& ratios,
                  std::uint64_t seed);
SplitResult split(const Manifest& manifest, const SplitRatios& ratios, std::uint64_t seed);

enum class Transform { hflip, vflip, rot90, rot180, rot270, brightness };

std::string transform_name(Transform t);

/// Applies one label-preserving transform. Brightness multiplies by `gain`
/// and clamps to [0,1].
Tensor apply_transform(const Tensor& image, Transform t, double gain = 1.0);

/// Each input contributes itself followed by factor-1 transformed copies.
/// Transforms cycle through a per-sample shuffled order of the six
/// transforms (the quarter turns only for square images); brightness gain
/// is drawn from [0.9, 1.1]. Per-sample streams derive from seed and
/// source_id, so the result does not depend on input order.
std::vector<Sample> augment(std::span<const Sample> train, std::size_t factor, std::uint64_t seed);

} // namespace fabnet
