#pragma once

#include "fabnet/keyvalue.hpp"
#include "fabnet/sample.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fabnet {

using Rgb = std::array<double, 3>;

enum class Motif { dot, diamond, cross };

std::string motif_name(Motif motif);
/// "dot", "diamond", "cross", or "mixed" (nullopt: drawn per image).
std::optional<Motif> parse_motif(const std::string& text);

/// Procedural printed-fabric generator settings.
struct SynthParams {
  std::size_t size = 64;          // square side in pixels, >= 32
  std::size_t tile_period = 8;    // motif repeat in pixels, >= 4
  double noise = 0.03;            // uniform noise amplitude
  Rgb ground{0.93, 0.89, 0.78};   // fabric base colour
  Rgb ink{0.16, 0.24, 0.52};      // printed motif colour
  Rgb spot{0.80, 0.12, 0.10};     // colour of stains
  std::optional<Motif> motif = Motif::dot;  // nullopt: a random motif per image
  bool random_phase = false;      // false: frames locked to the print repeat

  /// Throws ConfigError for out-of-range settings, including ground and ink
  /// that coincide in some channel (a shift there would be invisible).
  void validate() const;

  KeyValueDoc to_doc() const;
  static SynthParams from_doc(const KeyValueDoc& doc);
};

struct Disc {
  double cy = 0.0;
  double cx = 0.0;
  double radius = 0.0;
};

/// What was drawn, for checking the generator against its construction.
struct SynthTrace {
  Motif motif = Motif::dot;
  std::size_t phase_y = 0;
  std::size_t phase_x = 0;
  std::vector<Disc> discs;       // colour spot only
  std::size_t shifted_channel = 0;  // misprint only
  int shift_y = 0;
  int shift_x = 0;
};

struct SynthSample {
  Sample sample;
  SynthTrace trace;
};

/// Defect-free: a periodic two-colour motif plus low-amplitude noise.
/// Colour spot: the same image with 1-3 filled discs (radius 2-8) in the
/// spot colour. Misprint: the same image with one channel circularly
/// translated by an offset of 2-6 px (Chebyshev), never a multiple of the
/// period on both axes. The base image depends only on (params, seed).
SynthSample synth_fabric(ClassLabel label, const SynthParams& params, std::uint64_t seed);

/// True if pixel (y, x) lies inside the disc.
bool inside(const Disc& disc, std::size_t y, std::size_t x);

} // namespace fabnet
