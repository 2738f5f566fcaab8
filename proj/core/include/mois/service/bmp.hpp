#pragma once

// 8-bit grayscale BMP (palette of 256 grays), used for slice previews.

#include <cstdint>
#include <string>
#include <vector>

#include "mois/io/volume.hpp"

namespace mois::service {

std::string encode_bmp_gray8(const std::vector<uint8_t>& pixels, int width, int height);

// Inverse of encode_bmp_gray8; throws io::FormatError on anything else.
std::vector<uint8_t> decode_bmp_gray8(const std::string& bytes, int* width, int* height);

// Maps intensities in [lo, hi] linearly to 0..255, clamping outside.
std::vector<uint8_t> window_slice(const io::Volume& volume, int slice, double lo, double hi);

}  // namespace mois::service
