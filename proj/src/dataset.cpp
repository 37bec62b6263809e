#include "fabnet/dataset.hpp"

#include "fabnet/error.hpp"
#include "fabnet/keyvalue.hpp"
#include "fabnet/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

namespace fabnet {

ClassLabel to_class_label(long long value) {
  if (value < 0 || value > 2)
    throw DataError("class label must be 0, 1 or 2, got " + std::to_string(value));
  return static_cast<ClassLabel>(value);
}

std::string class_name(ClassLabel label) {
  switch (label) {
  case ClassLabel::defect_free:
    return "defect-free";
  case ClassLabel::color_spot:
    return "color-spot";
  case ClassLabel::misprint:
    return "misprint";
  }
  return "?";
}

std::string provenance_name(Provenance p) {
  switch (p) {
  case Provenance::original:
    return "original";
  case Provenance::augmented:
    return "augmented";
  case Provenance::synthetic:
    return "synthetic";
  }
  return "?";
}

Provenance parse_provenance(const std::string& text) {
  if (text == "original")
    return Provenance::original;
  if (text == "augmented")
    return Provenance::augmented;
  if (text == "synthetic")
    return Provenance::synthetic;
  throw DataError("unknown provenance '" + text + "'");
}

std::string split_name(SplitTag tag) {
  switch (tag) {
  case SplitTag::train:
    return "train";
  case SplitTag::val:
    return "val";
  case SplitTag::test:
    return "test";
  }
  return "?";
}

SplitTag parse_split(const std::string& text) {
  if (text == "train")
    return SplitTag::train;
  if (text == "val")
    return SplitTag::val;
  if (text == "test")
    return SplitTag::test;
  throw DataError("unknown split tag '" + text + "'");
}

// --- manifest ---------------------------------------------------------------

namespace {
constexpr const char* manifest_header = "path,label,provenance,split";
}

void Manifest::check() const {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (r.path.empty())
      throw DataError("manifest record with empty path");
    if (!seen.insert(r.path).second)
      throw DataError("manifest lists '" + r.path + "' more than once");
  }
}

std::string Manifest::to_csv() const {
  std::string out = std::string(manifest_header) + "\n";
  for (const auto& r : records)
    out += r.path + "," + std::to_string(index_of(r.label)) + "," +
           provenance_name(r.provenance) + "," + (r.split ? split_name(*r.split) : "") + "\n";
  for (const auto& a : annotations)
    out += "# " + a + "\n";
  return out;
}

Manifest Manifest::parse(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != manifest_header)
    throw DataError(origin + ": expected header '" + manifest_header + "'");
  Manifest m;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty())
      continue;
    if (t[0] == '#') {
      m.annotations.push_back(trim(std::string_view(t).substr(1)));
      continue;
    }
    const auto cols = split_list(t);
    if (cols.size() != 4)
      throw DataError(origin + ":" + std::to_string(lineno) + ": expected 4 columns");
    ManifestRecord r;
    r.path = cols[0];
    try {
      r.label = to_class_label(parse_int(cols[1], "label"));
    } catch (const ConfigError& e) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
    r.provenance = parse_provenance(cols[2]);
    if (!cols[3].empty())
      r.split = parse_split(cols[3]);
    m.records.push_back(std::move(r));
  }
  m.check();
  return m;
}

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open manifest " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

void Manifest::save(const std::filesystem::path& path) const {
  check();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot write manifest " + path.string());
  out << to_csv();
  if (!out)
    throw IoError("write failed for manifest " + path.string());
}

std::vector<std::size_t> Manifest::indices_with(SplitTag tag) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == tag)
      out.push_back(i);
  return out;
}

// --- split ------------------------------------------------------------------

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r))
      throw ConfigError("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1, got " + format_double(sum));
  const auto val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios[1]));
  const auto test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios[2]));
  if (val + test > n)
    throw DataError("degenerate split ratios: no samples left for train");
  std::array<std::size_t, 3> sizes{n - val - test, val, test};
  if (n >= 3)
    for (std::size_t s = 0; s < 3; ++s)
      if (sizes[s] == 0)
        throw DataError("degenerate split ratios: the " + split_name(static_cast<SplitTag>(s)) +
                        " partition of " + std::to_string(n) + " samples would be empty");
  return sizes;
}

namespace {

// Integer table with the given row and column sums where every cell is the
// floor or ceil of rows[c] * cols[s] / total. Floors first, then the unit
// excesses are routed by augmenting paths on the bipartite residual graph.
std::vector<std::array<std::size_t, 3>> controlled_rounding(
    const std::vector<std::size_t>& rows, const std::array<std::size_t, 3>& cols,
    std::size_t total) {
  const std::size_t k = rows.size();
  std::vector<std::array<std::size_t, 3>> table(k);
  std::vector<std::array<bool, 3>> can_raise(k), raised(k);
  std::vector<std::size_t> row_need(k);
  std::array<std::size_t, 3> col_need{};
  for (std::size_t s = 0; s < 3; ++s)
    col_need[s] = cols[s];
  for (std::size_t c = 0; c < k; ++c) {
    row_need[c] = rows[c];
    for (std::size_t s = 0; s < 3; ++s) {
      const std::size_t prod = rows[c] * cols[s];
      table[c][s] = prod / total;
      can_raise[c][s] = prod % total != 0;
      raised[c][s] = false;
      row_need[c] -= table[c][s];
      col_need[s] -= table[c][s];
    }
  }
  // Each augmenting path raises one more cell; alternate edges may be
  // lowered back so that every row and column ends exactly on target.
  for (std::size_t c0 = 0; c0 < k; ++c0) {
    while (row_need[c0] > 0) {
      // BFS over (class -> split via unraised edge) and (split -> class via raised edge).
      std::vector<int> class_prev(k, -1);
      std::array<int, 3> split_prev{-1, -1, -1};
      std::vector<bool> class_seen(k, false);
      std::array<bool, 3> split_seen{};
      std::queue<std::size_t> q;
      q.push(c0);
      class_seen[c0] = true;
      int found = -1;
      while (!q.empty() && found < 0) {
        const std::size_t c = q.front();
        q.pop();
        for (std::size_t s = 0; s < 3 && found < 0; ++s) {
          if (split_seen[s] || !can_raise[c][s] || raised[c][s])
            continue;
          split_seen[s] = true;
          split_prev[s] = static_cast<int>(c);
          if (col_need[s] > 0) {
            found = static_cast<int>(s);
            break;
          }
          for (std::size_t c2 = 0; c2 < k; ++c2) {
            if (!class_seen[c2] && raised[c2][s]) {
              class_seen[c2] = true;
              class_prev[c2] = static_cast<int>(s);
              q.push(c2);
            }
          }
        }
      }
      if (found < 0)
        throw DataError("stratified split: no consistent per-class allocation");
      // Walk back, toggling edges along the path.
      std::size_t s = static_cast<std::size_t>(found);
      --col_need[s];
      while (true) {
        const std::size_t c = static_cast<std::size_t>(split_prev[s]);
        raised[c][s] = true;
        if (c == c0)
          break;
        const std::size_t s_prev = static_cast<std::size_t>(class_prev[c]);
        raised[c][s_prev] = false;
        s = s_prev;
      }
      --row_need[c0];
    }
  }
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t s = 0; s < 3; ++s)
      table[c][s] += raised[c][s];
  return table;
}

} // namespace

SplitResult split(std::span<const ClassLabel> labels, const SplitRatios& ratios,
                  std::uint64_t seed) {
  if (labels.empty())
    throw DataError("cannot split an empty manifest");
  const auto sizes = split_sizes(labels.size(), ratios);

  std::vector<std::vector<std::size_t>> members(class_count);
  for (std::size_t i = 0; i < labels.size(); ++i)
    members[index_of(labels[i])].push_back(i);
  std::vector<std::size_t> rows;
  for (const auto& m : members)
    rows.push_back(m.size());
  const auto table = controlled_rounding(rows, sizes, labels.size());

  SplitResult out;
  for (std::size_t c = 0; c < class_count; ++c) {
    auto& idx = members[c];
    Rng rng(derive_seed(seed, c));
    rng.shuffle(std::span(idx));
    const std::size_t a = table[c][0], b = table[c][0] + table[c][1];
    out.train.insert(out.train.end(), idx.begin(), idx.begin() + a);
    out.val.insert(out.val.end(), idx.begin() + a, idx.begin() + b);
    out.test.insert(out.test.end(), idx.begin() + b, idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

SplitResult split(const Manifest& manifest, const SplitRatios& ratios, std::uint64_t seed) {
  std::vector<ClassLabel> labels;
  for (const auto& r : manifest.records)
    labels.push_back(r.label);
  if (labels.empty())
    throw DataError("cannot split an empty manifest");
  return split(labels, ratios, seed);
}

// --- augmentation -----------------------------------------------------------

std::string transform_name(Transform t) {
  switch (t) {
  case Transform::hflip:
    return "hflip";
  case Transform::vflip:
    return "vflip";
  case Transform::rot90:
    return "rot90";
  case Transform::rot180:
    return "rot180";
  case Transform::rot270:
    return "rot270";
  case Transform::brightness:
    return "brightness";
  }
  return "?";
}

Tensor apply_transform(const Tensor& image, Transform t, double gain) {
  if (image.rank() != 3)
    throw DimensionError("transform expects [C,H,W], got " + shape_string(image.shape()));
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if ((t == Transform::rot90 || t == Transform::rot270) && h != w)
    throw DimensionError("quarter-turn rotation needs a square image, got " +
                         shape_string(image.shape()));
  Tensor out(image.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double v = 0.0;
        switch (t) {
        case Transform::hflip:
          v = image.at(ch, y, w - 1 - x);
          break;
        case Transform::vflip:
          v = image.at(ch, h - 1 - y, x);
          break;
        case Transform::rot90:  // counter-clockwise
          v = image.at(ch, x, w - 1 - y);
          break;
        case Transform::rot180:
          v = image.at(ch, h - 1 - y, w - 1 - x);
          break;
        case Transform::rot270:
          v = image.at(ch, h - 1 - x, y);
          break;
        case Transform::brightness:
          v = std::clamp(image.at(ch, y, x) * gain, 0.0, 1.0);
          break;
        }
        out.at(ch, y, x) = v;
      }
    }
  }
  return out;
}

std::vector<Sample> augment(std::span<const Sample> train, std::size_t factor,
                            std::uint64_t seed) {
  if (factor < 1)
    throw ConfigError("augmentation factor must be at least 1");
  std::vector<Sample> out;
  out.reserve(train.size() * factor);
  for (const Sample& s : train) {
    out.push_back(s);
    if (factor == 1)
      continue;
    std::vector<Transform> pool{Transform::hflip, Transform::vflip, Transform::rot180,
                                Transform::brightness};
    if (s.image.rank() == 3 && s.image.dim(1) == s.image.dim(2)) {
      pool.push_back(Transform::rot90);
      pool.push_back(Transform::rot270);
    }
    Rng rng(derive_seed(seed, s.source_id));
    for (std::size_t j = 0; j + 1 < factor; ++j) {
      if (j % pool.size() == 0)
        rng.shuffle(std::span(pool));
      const Transform t = pool[j % pool.size()];
      const double gain = t == Transform::brightness ? rng.uniform(0.9, 1.1) : 1.0;
      Sample a;
      a.image = apply_transform(s.image, t, gain);
      a.label = s.label;
      a.source_id = s.source_id + "#aug" + std::to_string(j + 1);
      a.provenance = Provenance::augmented;
      out.push_back(std::move(a));
    }
  }
  return out;
}

} // namespace fabnet
