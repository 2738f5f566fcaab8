#pragma once

// Scan persistence in the native raw + JSON sidecar format.
//
// `<stem>.json` describes the payload:
//   {"format": "mois-volume", "version": 1, "dtype": "float32"|"uint8"|"int32",
//    "shape": [h, w, d], "spacing": [x, y, z], "origin": [x, y, z],
//    "payload": "<stem>.raw", "metadata": {...}}
// `<stem>.raw` holds the voxels little-endian in (z, y, x) order.

#include <array>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "mois/io/grid.hpp"

namespace mois::io {

inline constexpr int kVolumeFormatVersion = 1;

struct Volume {
  Grid3<float> intensities;
  Spacing spacing;
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  std::map<std::string, std::string> metadata;

  const Dims& dims() const { return intensities.dims(); }
  // Throws if extents are empty or spacing is not strictly positive.
  void validate() const;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_volume(const Volume& volume, const std::filesystem::path& sidecar);
Volume load_volume(const std::filesystem::path& sidecar);

// Masks carry the same sidecar; values must be 0 or 1 on load.
void save_mask(const Mask& mask, const Spacing& spacing, const std::filesystem::path& sidecar);
Mask load_mask(const std::filesystem::path& sidecar, Spacing* spacing = nullptr);

void save_labels(const LabelVolume& labels, const Spacing& spacing, const std::filesystem::path& sidecar);
LabelVolume load_labels(const std::filesystem::path& sidecar, Spacing* spacing = nullptr);

// In-memory variants used by the HTTP upload path: payload bytes plus the
// header fields normally found in the sidecar.
Volume volume_from_bytes(const std::string& payload, Dims dims, Spacing spacing);
std::string volume_to_bytes(const Volume& volume);
// Sidecar JSON text plus payload bytes, as sent by upload clients.
Volume volume_from_upload(const std::string& sidecar, const std::string& payload);
// Sidecar without the "payload" key.
nlohmann::json volume_sidecar(const Volume& volume);

}  // namespace mois::io
