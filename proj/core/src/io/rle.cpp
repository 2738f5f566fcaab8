#include "mois/io/rle.hpp"

#include <array>
#include <cstring>

#include "mois/io/volume.hpp"

namespace mois::io {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::vector<Run> encode_slice(const uint8_t* px, int64_t n) {
  std::vector<Run> runs;
  int64_t i = 0;
  while (i < n) {
    if (!px[i]) {
      ++i;
      continue;
    }
    int64_t j = i;
    while (j < n && px[j]) ++j;
    runs.emplace_back(static_cast<uint32_t>(i), static_cast<uint32_t>(j - i));
    i = j;
  }
  return runs;
}

}  // namespace

RleMask rle_encode(const Mask& mask, uint64_t revision) {
  RleMask out;
  out.dims = mask.dims();
  out.revision = revision;
  const int64_t n = mask.dims().slice_pixels();
  for (int z = 0; z < mask.dims().d; ++z) out.slices.push_back(encode_slice(mask.values().data() + z * n, n));
  return out;
}

RleMask rle_encode(const SliceMask& mask, uint64_t revision) {
  RleMask out;
  out.dims = {mask.h(), mask.w(), 1};
  out.revision = revision;
  out.slices.push_back(encode_slice(mask.values().data(), mask.size()));
  return out;
}

void rle_validate(const RleMask& rle) {
  if (rle.dims.h < 0 || rle.dims.w < 0 || rle.dims.d < 0) throw FormatError("rle: negative extent");
  if (static_cast<int>(rle.slices.size()) != rle.dims.d) {
    throw FormatError("rle: " + std::to_string(rle.slices.size()) + " slices for depth " + std::to_string(rle.dims.d));
  }
  const uint64_t n = static_cast<uint64_t>(rle.dims.slice_pixels());
  for (size_t z = 0; z < rle.slices.size(); ++z) {
    uint64_t end = 0;
    bool first = true;
    for (const auto& [start, length] : rle.slices[z]) {
      if (length == 0) throw FormatError("rle: empty run in slice " + std::to_string(z));
      if (!first && start <= end) throw FormatError("rle: runs unsorted or not maximal in slice " + std::to_string(z));
      if (static_cast<uint64_t>(start) + length > n) throw FormatError("rle: run out of bounds in slice " + std::to_string(z));
      end = static_cast<uint64_t>(start) + length;
      first = false;
    }
  }
}

Mask rle_decode(const RleMask& rle) {
  rle_validate(rle);
  Mask m(rle.dims);
  const int64_t n = rle.dims.slice_pixels();
  for (int z = 0; z < rle.dims.d; ++z)
    for (const auto& [start, length] : rle.slices[z]) std::memset(m.values().data() + z * n + start, 1, length);
  return m;
}

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const uint32_t v = (static_cast<uint8_t>(bytes[i]) << 16) | (static_cast<uint8_t>(bytes[i + 1]) << 8) |
                       static_cast<uint8_t>(bytes[i + 2]);
    for (int s = 18; s >= 0; s -= 6) out += kAlphabet[(v >> s) & 63];
  }
  const size_t rest = bytes.size() - i;
  if (rest > 0) {
    uint32_t v = static_cast<uint8_t>(bytes[i]) << 16;
    if (rest == 2) v |= static_cast<uint8_t>(bytes[i + 1]) << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  static const std::array<int, 256> table = [] {
    std::array<int, 256> t{};
    t.fill(-1);
    for (int i = 0; i < 64; ++i) t[static_cast<uint8_t>(kAlphabet[i])] = i;
    return t;
  }();
  if (text.size() % 4 != 0) throw FormatError("base64: length not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (size_t i = 0; i < text.size(); i += 4) {
    int pad = 0;
    uint32_t v = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        ++pad;
        v <<= 6;
        continue;
      }
      if (pad > 0) throw FormatError("base64: data after padding");
      const int d = table[static_cast<uint8_t>(c)];
      if (d < 0) throw FormatError("base64: invalid character");
      v = (v << 6) | static_cast<uint32_t>(d);
    }
    out += static_cast<char>((v >> 16) & 255);
    if (pad < 2) out += static_cast<char>((v >> 8) & 255);
    if (pad < 1) out += static_cast<char>(v & 255);
  }
  return out;
}

nlohmann::json rle_to_json(const RleMask& rle) {
  nlohmann::json slices = nlohmann::json::array();
  for (const auto& runs : rle.slices) {
    std::string bytes(runs.size() * 8, '\0');
    for (size_t i = 0; i < runs.size(); ++i) {
      std::memcpy(bytes.data() + 8 * i, &runs[i].first, 4);
      std::memcpy(bytes.data() + 8 * i + 4, &runs[i].second, 4);
    }
    slices.push_back(base64_encode(bytes));
  }
  return {{"shape", {rle.dims.h, rle.dims.w, rle.dims.d}}, {"revision", rle.revision}, {"slices", slices}};
}

RleMask rle_from_json(const nlohmann::json& j) {
  RleMask rle;
  try {
    const auto& shape = j.at("shape");
    if (!shape.is_array() || shape.size() != 3) throw FormatError("rle: shape must have 3 entries");
    rle.dims = {shape[0].get<int>(), shape[1].get<int>(), shape[2].get<int>()};
    rle.revision = j.value("revision", uint64_t{0});
    for (const auto& s : j.at("slices")) {
      const std::string bytes = base64_decode(s.get<std::string>());
      if (bytes.size() % 8 != 0) throw FormatError("rle: slice payload is not a whole number of runs");
      std::vector<Run> runs(bytes.size() / 8);
      for (size_t i = 0; i < runs.size(); ++i) {
        std::memcpy(&runs[i].first, bytes.data() + 8 * i, 4);
        std::memcpy(&runs[i].second, bytes.data() + 8 * i + 4, 4);
      }
      rle.slices.push_back(std::move(runs));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("rle: ") + e.what());
  }
  rle_validate(rle);
  return rle;
}

}  // namespace mois::io
