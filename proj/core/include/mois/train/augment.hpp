#pragma once

// 2D affine augmentation shared by every slice of a training window.

#include <random>

#include <json.hpp>

#include "mois/io/grid.hpp"

namespace mois::train {

struct AugmentConfig {
  bool enabled = true;
  double rotation_deg = 10.0;
  double shear_deg = 5.0;
  bool flip = true;
  double crop_min = 0.85;  // smallest crop side as a fraction of the slice

  void validate() const;
  bool operator==(const AugmentConfig&) const = default;
};

void to_json(nlohmann::json& j, const AugmentConfig& c);
void from_json(const nlohmann::json& j, AugmentConfig& c);

// Maps output coordinates to input coordinates, both normalized to [-1, 1]
// over the slice extent (pixel centres at half-pixel offsets).
struct Affine2 {
  double a = 1, b = 0, c = 0, d = 1;  // [[a b] [c d]]
  double tx = 0, ty = 0;

  static Affine2 identity() { return {}; }
  static Affine2 sample(const AugmentConfig& config, std::mt19937_64& rng);
  bool is_identity() const { return a == 1 && b == 0 && c == 0 && d == 1 && tx == 0 && ty == 0; }
};

// Bilinear resampling with edge clamping.
Image warp_image(const Image& image, const Affine2& t, int out_h, int out_w);

// Nearest-neighbour resampling with edge clamping; label-preserving.
template <typename V>
Grid2<V> warp_labels(const Grid2<V>& labels, const Affine2& t, int out_h, int out_w);

}  // namespace mois::train
