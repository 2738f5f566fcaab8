#pragma once

// Run-length encoded masks. Each slice is a sorted list of maximal runs of
// foreground pixels, (start, length) over the slice's row-major order. The
// encoding of a mask is unique.
//
// JSON form: {"shape": [h, w, d], "revision": r, "slices": ["<base64>", ...]}
// where each slice string is base64 of little-endian u32 pairs.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mois/io/grid.hpp"

namespace mois::io {

using Run = std::pair<uint32_t, uint32_t>;

struct RleMask {
  Dims dims;
  std::vector<std::vector<Run>> slices;  // one list per slice
  uint64_t revision = 0;

  bool operator==(const RleMask&) const = default;
};

RleMask rle_encode(const Mask& mask, uint64_t revision = 0);
RleMask rle_encode(const SliceMask& mask, uint64_t revision = 0);
// Throws FormatError unless the runs are canonical (sorted, non-empty,
// non-touching, within bounds).
Mask rle_decode(const RleMask& rle);
void rle_validate(const RleMask& rle);

nlohmann::json rle_to_json(const RleMask& rle);
RleMask rle_from_json(const nlohmann::json& j);

std::string base64_encode(std::string_view bytes);
// Throws FormatError on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace mois::io
