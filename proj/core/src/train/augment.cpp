#include "mois/train/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mois::train {

void AugmentConfig::validate() const {
  if (rotation_deg < 0 || rotation_deg > 180) throw std::invalid_argument("AugmentConfig: rotation_deg out of [0, 180]");
  if (shear_deg < 0 || shear_deg >= 45) throw std::invalid_argument("AugmentConfig: shear_deg out of [0, 45)");
  if (!(crop_min > 0 && crop_min <= 1)) throw std::invalid_argument("AugmentConfig: crop_min must lie in (0, 1]");
}

void to_json(nlohmann::json& j, const AugmentConfig& c) {
  j = {{"enabled", c.enabled}, {"rotation_deg", c.rotation_deg}, {"shear_deg", c.shear_deg},
       {"flip", c.flip},       {"crop_min", c.crop_min}};
}

void from_json(const nlohmann::json& j, AugmentConfig& c) {
  c = AugmentConfig{};
  c.enabled = j.value("enabled", c.enabled);
  c.rotation_deg = j.value("rotation_deg", c.rotation_deg);
  c.shear_deg = j.value("shear_deg", c.shear_deg);
  c.flip = j.value("flip", c.flip);
  c.crop_min = j.value("crop_min", c.crop_min);
  c.validate();
}

Affine2 Affine2::sample(const AugmentConfig& config, std::mt19937_64& rng) {
  if (!config.enabled) return identity();
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double deg = std::numbers::pi / 180.0;
  const double theta = unit(rng) * config.rotation_deg * deg;
  const double shear = std::tan(unit(rng) * config.shear_deg * deg);
  const double flip = config.flip && std::uniform_int_distribution<int>(0, 1)(rng) == 1 ? -1.0 : 1.0;
  const double scale = std::uniform_real_distribution<double>(config.crop_min, 1.0)(rng);
  const double slack = 1.0 - scale;
  // rotation * shear * diag(flip*scale, scale), then a crop offset that keeps
  // the window inside the slice.
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double m00 = cs, m01 = cs * shear - sn, m10 = sn, m11 = sn * shear + cs;
  Affine2 t;
  t.a = m00 * flip * scale;
  t.b = m01 * scale;
  t.c = m10 * flip * scale;
  t.d = m11 * scale;
  t.tx = unit(rng) * slack;
  t.ty = unit(rng) * slack;
  return t;
}

namespace {

// Output pixel (x, y) -> input pixel coordinates.
inline void map_point(const Affine2& t, int x, int y, int out_h, int out_w, int in_h, int in_w, double& ix, double& iy) {
  const double u = 2.0 * (x + 0.5) / out_w - 1.0;
  const double v = 2.0 * (y + 0.5) / out_h - 1.0;
  const double pu = t.a * u + t.b * v + t.tx;
  const double pv = t.c * u + t.d * v + t.ty;
  ix = (pu + 1.0) * 0.5 * in_w - 0.5;
  iy = (pv + 1.0) * 0.5 * in_h - 0.5;
}

}  // namespace

Image warp_image(const Image& image, const Affine2& t, int out_h, int out_w) {
  if (image.h() < 1 || image.w() < 1) throw std::invalid_argument("warp_image: empty image");
  if (out_h == image.h() && out_w == image.w() && t.is_identity()) return image;
  Image out(out_h, out_w);
  const int h = image.h(), w = image.w();
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      double ix, iy;
      map_point(t, x, y, out_h, out_w, h, w, ix, iy);
      ix = std::clamp(ix, 0.0, static_cast<double>(w - 1));
      iy = std::clamp(iy, 0.0, static_cast<double>(h - 1));
      const int x0 = static_cast<int>(std::floor(ix)), y0 = static_cast<int>(std::floor(iy));
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = ix - x0, fy = iy - y0;
      const double top = image(x0, y0) * (1 - fx) + image(x1, y0) * fx;
      const double bottom = image(x0, y1) * (1 - fx) + image(x1, y1) * fx;
      out(x, y) = static_cast<float>(top * (1 - fy) + bottom * fy);
    }
  return out;
}

template <typename V>
Grid2<V> warp_labels(const Grid2<V>& labels, const Affine2& t, int out_h, int out_w) {
  if (labels.h() < 1 || labels.w() < 1) throw std::invalid_argument("warp_labels: empty grid");
  if (out_h == labels.h() && out_w == labels.w() && t.is_identity()) return labels;
  Grid2<V> out(out_h, out_w);
  const int h = labels.h(), w = labels.w();
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      double ix, iy;
      map_point(t, x, y, out_h, out_w, h, w, ix, iy);
      const int nx = std::clamp(static_cast<int>(std::floor(ix + 0.5)), 0, w - 1);
      const int ny = std::clamp(static_cast<int>(std::floor(iy + 0.5)), 0, h - 1);
      out(x, y) = labels(nx, ny);
    }
  return out;
}

template Grid2<uint8_t> warp_labels(const Grid2<uint8_t>&, const Affine2&, int, int);
template Grid2<int32_t> warp_labels(const Grid2<int32_t>&, const Affine2&, int, int);

}  // namespace mois::train
