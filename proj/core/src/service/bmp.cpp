#include "mois/service/bmp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace mois::service {

namespace {

constexpr size_t kFileHeader = 14;
constexpr size_t kInfoHeader = 40;
constexpr size_t kPalette = 256 * 4;

void put_u16(std::string& out, size_t at, uint16_t v) {
  out[at] = static_cast<char>(v & 0xff);
  out[at + 1] = static_cast<char>(v >> 8);
}

void put_u32(std::string& out, size_t at, uint32_t v) {
  for (int i = 0; i < 4; ++i) out[at + i] = static_cast<char>((v >> (8 * i)) & 0xff);
}

uint32_t get_u32(const std::string& in, size_t at) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(in[at + i])) << (8 * i);
  return v;
}

uint16_t get_u16(const std::string& in, size_t at) {
  return static_cast<uint16_t>(static_cast<uint8_t>(in[at]) | (static_cast<uint8_t>(in[at + 1]) << 8));
}

size_t row_stride(int width) { return (static_cast<size_t>(width) + 3) / 4 * 4; }

}  // namespace

std::string encode_bmp_gray8(const std::vector<uint8_t>& pixels, int width, int height) {
  if (width < 1 || height < 1 || pixels.size() != static_cast<size_t>(width) * height)
    throw std::invalid_argument("bmp: pixel count does not match extents");
  const size_t stride = row_stride(width);
  const size_t offset = kFileHeader + kInfoHeader + kPalette;
  std::string out(offset + stride * height, '\0');
  out[0] = 'B';
  out[1] = 'M';
  put_u32(out, 2, static_cast<uint32_t>(out.size()));
  put_u32(out, 10, static_cast<uint32_t>(offset));
  put_u32(out, 14, kInfoHeader);
  put_u32(out, 18, static_cast<uint32_t>(width));
  put_u32(out, 22, static_cast<uint32_t>(height));  // positive: bottom-up rows
  put_u16(out, 26, 1);
  put_u16(out, 28, 8);
  put_u32(out, 34, static_cast<uint32_t>(stride * height));
  put_u32(out, 46, 256);
  for (int g = 0; g < 256; ++g) {
    size_t at = kFileHeader + kInfoHeader + 4 * g;
    out[at] = out[at + 1] = out[at + 2] = static_cast<char>(g);
  }
  for (int y = 0; y < height; ++y) {
    size_t row = offset + stride * (height - 1 - y);
    std::memcpy(&out[row], &pixels[static_cast<size_t>(y) * width], width);
  }
  return out;
}

std::vector<uint8_t> decode_bmp_gray8(const std::string& bytes, int* width, int* height) {
  const size_t offset = kFileHeader + kInfoHeader + kPalette;
  if (bytes.size() < offset || bytes[0] != 'B' || bytes[1] != 'M') throw io::FormatError("bmp: bad header");
  if (get_u32(bytes, 10) != offset || get_u32(bytes, 14) != kInfoHeader || get_u16(bytes, 28) != 8)
    throw io::FormatError("bmp: not an 8-bit paletted image");
  const int w = static_cast<int>(get_u32(bytes, 18));
  const int h = static_cast<int>(get_u32(bytes, 22));
  if (w < 1 || h < 1) throw io::FormatError("bmp: bad extents");
  const size_t stride = row_stride(w);
  if (bytes.size() != offset + stride * h) throw io::FormatError("bmp: size mismatch");
  std::vector<uint8_t> pixels(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    std::memcpy(&pixels[static_cast<size_t>(y) * w], &bytes[offset + stride * (h - 1 - y)], w);
  if (width) *width = w;
  if (height) *height = h;
  return pixels;
}

std::vector<uint8_t> window_slice(const io::Volume& volume, int slice, double lo, double hi) {
  const Dims& dims = volume.dims();
  if (slice < 0 || slice >= dims.d) throw std::out_of_range("slice " + std::to_string(slice) + " outside volume");
  std::vector<uint8_t> out(static_cast<size_t>(dims.h) * dims.w);
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  for (int y = 0; y < dims.h; ++y)
    for (int x = 0; x < dims.w; ++x) {
      double v = (volume.intensities(x, y, slice) - lo) * scale;
      out[static_cast<size_t>(y) * dims.w + x] = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  return out;
}

}  // namespace mois::service
