#include "fabnet/synth.hpp"

#include "fabnet/error.hpp"
#include "fabnet/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace fabnet {

namespace {

std::string rgb_text(const Rgb& c) {
  return format_double(c[0]) + "," + format_double(c[1]) + "," + format_double(c[2]);
}

Rgb parse_rgb(const std::string& text, const char* key) {
  const auto parts = split_list(text);
  if (parts.size() != 3)
    throw ConfigError(std::string(key) + ": expected r,g,b");
  return {parse_double(parts[0], key), parse_double(parts[1], key), parse_double(parts[2], key)};
}

bool in_motif(Motif motif, double u, double v, double period) {
  const double c = (period - 1.0) / 2.0;
  const double du = std::abs(u - c), dv = std::abs(v - c);
  switch (motif) {
  case Motif::dot:
    return du * du + dv * dv <= (0.3 * period) * (0.3 * period);
  case Motif::diamond:
    return du + dv <= 0.35 * period;
  case Motif::cross:
    return du <= 0.12 * period || dv <= 0.12 * period;
  }
  return false;
}

std::size_t wrap(long value, std::size_t extent) {
  const long e = static_cast<long>(extent);
  return static_cast<std::size_t>(((value % e) + e) % e);
}

} // namespace

std::string motif_name(Motif motif) {
  switch (motif) {
  case Motif::dot:
    return "dot";
  case Motif::diamond:
    return "diamond";
  case Motif::cross:
    return "cross";
  }
  return "?";
}

std::optional<Motif> parse_motif(const std::string& text) {
  for (Motif m : {Motif::dot, Motif::diamond, Motif::cross})
    if (text == motif_name(m))
      return m;
  if (text == "mixed")
    return std::nullopt;
  throw ConfigError("unknown motif '" + text + "' (expected dot, diamond, cross or mixed)");
}

void SynthParams::validate() const {
  if (size < 32)
    throw ConfigError("synthetic image size must be at least 32, got " + std::to_string(size));
  if (tile_period < 4 || tile_period > size)
    throw ConfigError("tile period must lie in [4, size], got " + std::to_string(tile_period));
  if (!(noise >= 0.0 && noise <= 0.5))
    throw ConfigError("noise amplitude must lie in [0, 0.5]");
  for (const Rgb* c : {&ground, &ink, &spot})
    for (double v : *c)
      if (!(v >= 0.0 && v <= 1.0))
        throw ConfigError("colours must have channels in [0, 1]");
  for (std::size_t ch = 0; ch < 3; ++ch)
    if (std::abs(ground[ch] - ink[ch]) < 0.1)
      throw ConfigError("ground and ink must differ by at least 0.1 in every channel");
}

KeyValueDoc SynthParams::to_doc() const {
  KeyValueDoc doc;
  doc.set("size", std::to_string(size));
  doc.set("tile_period", std::to_string(tile_period));
  doc.set("noise", format_double(noise));
  doc.set("ground", rgb_text(ground));
  doc.set("ink", rgb_text(ink));
  doc.set("spot", rgb_text(spot));
  doc.set("motif", motif ? motif_name(*motif) : "mixed");
  doc.set("random_phase", random_phase ? "true" : "false");
  return doc;
}

SynthParams SynthParams::from_doc(const KeyValueDoc& doc) {
  doc.reject_unknown({"size", "tile_period", "noise", "ground", "ink", "spot", "motif",
                      "random_phase"});
  SynthParams p;
  auto count = [](const std::string& text, const char* key) {
    const long long v = parse_int(text, key);
    if (v <= 0)
      throw ConfigError(std::string(key) + " must be positive");
    return static_cast<std::size_t>(v);
  };
  if (auto v = doc.get("size"))
    p.size = count(*v, "size");
  if (auto v = doc.get("tile_period"))
    p.tile_period = count(*v, "tile_period");
  if (auto v = doc.get("noise"))
    p.noise = parse_double(*v, "noise");
  if (auto v = doc.get("ground"))
    p.ground = parse_rgb(*v, "ground");
  if (auto v = doc.get("ink"))
    p.ink = parse_rgb(*v, "ink");
  if (auto v = doc.get("spot"))
    p.spot = parse_rgb(*v, "spot");
  if (auto v = doc.get("motif"))
    p.motif = parse_motif(*v);
  if (auto v = doc.get("random_phase")) {
    if (*v != "true" && *v != "false")
      throw ConfigError("random_phase must be true or false, got '" + *v + "'");
    p.random_phase = *v == "true";
  }
  p.validate();
  return p;
}

bool inside(const Disc& disc, std::size_t y, std::size_t x) {
  const double dy = static_cast<double>(y) - disc.cy;
  const double dx = static_cast<double>(x) - disc.cx;
  return dy * dy + dx * dx <= disc.radius * disc.radius;
}

SynthSample synth_fabric(ClassLabel label, const SynthParams& params, std::uint64_t seed) {
  params.validate();
  const std::size_t n = params.size;
  const std::size_t period = params.tile_period;
  SynthSample out;
  SynthTrace& trace = out.trace;

  Rng base_rng(derive_seed(seed, "base"));
  const Motif drawn = static_cast<Motif>(base_rng.below(3));
  trace.motif = params.motif.value_or(drawn);
  trace.phase_y = static_cast<std::size_t>(base_rng.below(period));
  trace.phase_x = static_cast<std::size_t>(base_rng.below(period));
  if (!params.random_phase)
    trace.phase_y = trace.phase_x = 0;

  Tensor image({3, n, n});
  const double p = static_cast<double>(period);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double u = static_cast<double>((y + trace.phase_y) % period);
      const double v = static_cast<double>((x + trace.phase_x) % period);
      const Rgb& colour = in_motif(trace.motif, u, v, p) ? params.ink : params.ground;
      for (std::size_t c = 0; c < 3; ++c)
        image.at(c, y, x) = colour[c];
    }
  }
  for (double& v : image.data())
    v = std::clamp(v + base_rng.uniform(-params.noise, params.noise), 0.0, 1.0);

  Rng defect_rng(derive_seed(seed, "defect"));
  if (label == ClassLabel::color_spot) {
    const auto count = defect_rng.between(1, 3);
    for (long i = 0; i < count; ++i) {
      Disc d;
      d.radius = static_cast<double>(defect_rng.between(2, 8));
      d.cy = static_cast<double>(defect_rng.below(n));
      d.cx = static_cast<double>(defect_rng.below(n));
      trace.discs.push_back(d);
    }
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x)
        for (const Disc& d : trace.discs)
          if (inside(d, y, x))
            for (std::size_t c = 0; c < 3; ++c)
              image.at(c, y, x) = params.spot[c];
  } else if (label == ClassLabel::misprint) {
    trace.shifted_channel = static_cast<std::size_t>(defect_rng.below(3));
    const long lp = static_cast<long>(period);
    while (true) {
      const long dy = defect_rng.between(-6, 6);
      const long dx = defect_rng.between(-6, 6);
      const long reach = std::max(std::labs(dy), std::labs(dx));
      if (reach < 2 || (dy % lp == 0 && dx % lp == 0))
        continue;
      trace.shift_y = static_cast<int>(dy);
      trace.shift_x = static_cast<int>(dx);
      break;
    }
    const Tensor base = image;
    const std::size_t c = trace.shifted_channel;
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x)
        image.at(c, y, x) = base.at(c, wrap(static_cast<long>(y) - trace.shift_y, n),
                                    wrap(static_cast<long>(x) - trace.shift_x, n));
  }

  out.sample.image = std::move(image);
  out.sample.label = label;
  out.sample.provenance = Provenance::synthetic;
  out.sample.source_id = "synth-" + std::to_string(index_of(label)) + "-" + std::to_string(seed);
  return out;
}

} // namespace fabnet
