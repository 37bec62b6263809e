#include "fabnet/image_io.hpp"

#include "fabnet/error.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fabnet {

namespace {

struct PngImage {
  png_image image;
  PngImage() {
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open image " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Tensor decode_rgb(PngImage& png, const std::string& origin) {
  const png_uint_32 fmt = png.image.format;
  if (!(fmt & PNG_FORMAT_FLAG_COLOR) || (fmt & PNG_FORMAT_FLAG_ALPHA)) {
    const int channels = PNG_IMAGE_SAMPLE_CHANNELS(fmt);
    throw DataError(origin + ": expected 3 colour channels (RGB), found " +
                    std::to_string(channels));
  }
  png.image.format = PNG_FORMAT_RGB;
  const std::size_t h = png.image.height, w = png.image.width;
  std::vector<png_byte> pixels(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, pixels.data(), 0, nullptr))
    throw IoError(origin + ": PNG decode failed: " + png.image.message);
  Tensor t({3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        t.at(c, y, x) = pixels[(y * w + x) * 3 + c] / 255.0;
  return t;
}

} // namespace

std::uint8_t quantize_channel(double value) {
  const double v = std::clamp(value, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

Tensor decode_png(std::span<const std::uint8_t> bytes) {
  PngImage png;
  if (!png_image_begin_read_from_memory(&png.image, bytes.data(), bytes.size()))
    throw IoError(std::string("PNG decode failed: ") + png.image.message);
  return decode_rgb(png, "<memory>");
}

Tensor load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  PngImage png;
  if (!png_image_begin_read_from_memory(&png.image, bytes.data(), bytes.size()))
    throw IoError(path.string() + ": PNG decode failed: " + png.image.message);
  return decode_rgb(png, path.string());
}

std::vector<std::uint8_t> encode_png(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw DimensionError("write_image expects [3,H,W], got " + shape_string(image.shape()));
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::vector<png_byte> pixels(h * w * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        pixels[(y * w + x) * 3 + c] = quantize_channel(image.at(c, y, x));

  PngImage png;
  png.image.width = static_cast<png_uint_32>(w);
  png.image.height = static_cast<png_uint_32>(h);
  png.image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(png.image, size, 0, pixels.data(), 0, nullptr))
    throw IoError(std::string("PNG encode failed: ") + png.image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png.image, out.data(), &size, 0, pixels.data(), 0, nullptr))
    throw IoError(std::string("PNG encode failed: ") + png.image.message);
  out.resize(size);
  return out;
}

void write_image(const Tensor& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot write image " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw IoError("write failed for image " + path.string());
}

} // namespace fabnet
