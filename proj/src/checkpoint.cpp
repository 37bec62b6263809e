#include "fabnet/checkpoint.hpp"

#include "fabnet/error.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fabnet {

namespace {

constexpr char magic[4] = {'F', 'S', 'C', 'K'};

template <typename T> void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T> T get_le(const std::uint8_t* p) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    value |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
  return value;
}

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(
      crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

} // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  std::vector<std::uint8_t> out(std::begin(magic), std::end(magic));
  put_le<std::uint16_t>(out, checkpoint_version);
  const std::string spec = model_spec_to_text(model.spec());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(spec.size()));
  out.insert(out.end(), spec.begin(), spec.end());
  for (const auto& p : model.parameters())
    for (double v : p.value.data())
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  put_le<std::uint32_t>(out, crc_of(out));
  return out;
}

Model decode_checkpoint(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t header = sizeof magic + 2 + 4;
  if (bytes.size() >= sizeof magic && std::memcmp(bytes.data(), magic, sizeof magic) != 0)
    throw CheckpointError(CheckpointFault::bad_magic, "not a checkpoint (bad magic bytes)");
  if (bytes.size() < header + 4)
    throw CheckpointError(CheckpointFault::truncated, "checkpoint truncated inside the header");
  const auto version = get_le<std::uint16_t>(bytes.data() + 4);
  if (version != checkpoint_version)
    throw CheckpointError(CheckpointFault::version_mismatch,
                          "checkpoint format version " + std::to_string(version) +
                              " is not supported (expected " +
                              std::to_string(checkpoint_version) + ")");
  const auto spec_len = get_le<std::uint32_t>(bytes.data() + 6);
  if (bytes.size() < header + spec_len + 4)
    throw CheckpointError(CheckpointFault::truncated, "checkpoint truncated inside the model spec");

  // The spec text is needed to know the payload length; verify the digest
  // before trusting it whenever the file is long enough to hold one.
  const std::string text(reinterpret_cast<const char*>(bytes.data() + header), spec_len);
  ModelSpec spec;
  try {
    spec = parse_model_spec(text);
    validate(spec);
  } catch (const Error& e) {
    const auto stored = get_le<std::uint32_t>(bytes.data() + bytes.size() - 4);
    if (stored != crc_of(bytes.first(bytes.size() - 4)))
      throw CheckpointError(CheckpointFault::digest_mismatch, "checkpoint digest mismatch");
    throw CheckpointError(CheckpointFault::spec_mismatch,
                          std::string("checkpoint model spec is invalid: ") + e.what());
  }
  Model shell = build(spec, 0);
  std::size_t values = 0;
  for (const auto& p : shell.parameters())
    values += p.value.size();
  const std::size_t expected = header + spec_len + 8 * values + 4;
  if (bytes.size() < expected)
    throw CheckpointError(CheckpointFault::truncated,
                          "checkpoint truncated: " + std::to_string(bytes.size()) + " of " +
                              std::to_string(expected) + " bytes");
  const auto stored = get_le<std::uint32_t>(bytes.data() + bytes.size() - 4);
  if (bytes.size() != expected || stored != crc_of(bytes.first(bytes.size() - 4)))
    throw CheckpointError(CheckpointFault::digest_mismatch, "checkpoint digest mismatch");

  std::vector<Tensor> tensors;
  const std::uint8_t* p = bytes.data() + header + spec_len;
  for (const auto& param : shell.parameters()) {
    Tensor t(param.value.shape());
    for (double& v : t.data()) {
      v = std::bit_cast<double>(get_le<std::uint64_t>(p));
      p += 8;
    }
    tensors.push_back(std::move(t));
  }
  Model model = assemble(spec, std::move(tensors));
  model.set_mode(Mode::eval);
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw IoError("write failed for checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(e.fault(), path.string() + ": " + e.what());
  }
}

Model load_checkpoint(const std::filesystem::path& path, const ModelSpec& expected) {
  Model model = load_checkpoint(path);
  if (!(model.spec() == expected))
    throw CheckpointError(CheckpointFault::spec_mismatch,
                          path.string() + ": checkpoint was saved for a different model spec");
  return model;
}

} // namespace fabnet
