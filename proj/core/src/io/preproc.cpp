#include "mois/io/preproc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mois::io {

namespace {

// Continuous source coordinate for output sample i under centre alignment.
inline double source_coord(int i, double ratio) { return (i + 0.5) * ratio - 0.5; }

struct Lerp {
  int i0, i1;
  double t;
};

Lerp lerp_index(int i, double ratio, int n) {
  double c = std::clamp(source_coord(i, ratio), 0.0, static_cast<double>(n - 1));
  int i0 = static_cast<int>(std::floor(c));
  int i1 = std::min(i0 + 1, n - 1);
  return {i0, i1, c - i0};
}

int nearest_index(int i, double ratio, int n) {
  int s = static_cast<int>(std::floor((i + 0.5) * ratio));
  return std::clamp(s, 0, n - 1);
}

}  // namespace

Dims resampled_dims(Dims dims, const Spacing& source, const Spacing& target) {
  if (!(target.x > 0) || !(target.y > 0) || !(target.z > 0)) {
    throw std::invalid_argument("resample: target spacing must be positive");
  }
  Dims out{static_cast<int>(std::lround(dims.h * source.y / target.y)),
           static_cast<int>(std::lround(dims.w * source.x / target.x)),
           static_cast<int>(std::lround(dims.d * source.z / target.z))};
  if (out.h < 1 || out.w < 1 || out.d < 1) {
    throw std::invalid_argument("resample: degenerate output extent " + out.str() + " from " + dims.str());
  }
  return out;
}

Volume resample_spacing(const Volume& volume, const Spacing& target) {
  volume.validate();
  const Dims in = volume.dims();
  const Dims out = resampled_dims(in, volume.spacing, target);
  const double rx = target.x / volume.spacing.x, ry = target.y / volume.spacing.y, rz = target.z / volume.spacing.z;
  std::vector<Lerp> lx(out.w), ly(out.h), lz(out.d);
  for (int i = 0; i < out.w; ++i) lx[i] = lerp_index(i, rx, in.w);
  for (int i = 0; i < out.h; ++i) ly[i] = lerp_index(i, ry, in.h);
  for (int i = 0; i < out.d; ++i) lz[i] = lerp_index(i, rz, in.d);

  const auto& src = volume.intensities;
  Grid3<float> dst(out);
  for (int z = 0; z < out.d; ++z) {
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        const Lerp &a = lx[x], &b = ly[y], &c = lz[z];
        auto plane = [&](int zz) {
          double top = src(a.i0, b.i0, zz) * (1 - a.t) + src(a.i1, b.i0, zz) * a.t;
          double bot = src(a.i0, b.i1, zz) * (1 - a.t) + src(a.i1, b.i1, zz) * a.t;
          return top * (1 - b.t) + bot * b.t;
        };
        dst(x, y, z) = static_cast<float>(plane(c.i0) * (1 - c.t) + plane(c.i1) * c.t);
      }
    }
  }
  Volume result = volume;
  result.intensities = std::move(dst);
  result.spacing = target;
  return result;
}

Mask resample_mask(const Mask& mask, const Spacing& source, const Spacing& target) {
  const Dims in = mask.dims();
  const Dims out = resampled_dims(in, source, target);
  Mask dst(out);
  for (int z = 0; z < out.d; ++z) {
    int sz = nearest_index(z, target.z / source.z, in.d);
    for (int y = 0; y < out.h; ++y) {
      int sy = nearest_index(y, target.y / source.y, in.h);
      for (int x = 0; x < out.w; ++x) {
        dst(x, y, z) = mask(nearest_index(x, target.x / source.x, in.w), sy, sz);
      }
    }
  }
  return dst;
}

double percentile(std::vector<float> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of empty sample");
  if (!(p >= 0 && p <= 100)) throw std::invalid_argument("percentile must lie in [0, 100]");
  double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  auto lo = static_cast<size_t>(std::floor(pos));
  double frac = pos - static_cast<double>(lo);
  std::nth_element(values.begin(), values.begin() + lo, values.end());
  double a = values[lo];
  if (frac == 0.0 || lo + 1 >= values.size()) return a;
  // Next order statistic is the minimum of the upper partition.
  double b = *std::min_element(values.begin() + lo + 1, values.end());
  return a + (b - a) * frac;
}

Volume normalize_percentile(const Volume& volume, double p_low, double p_high) {
  if (p_low > p_high) throw std::invalid_argument("normalize_percentile: p_low > p_high");
  const auto& vals = volume.intensities.values();
  double lo = percentile(vals, p_low);
  double hi = percentile(vals, p_high);
  Volume out = volume;
  auto& dst = out.intensities.values();
  if (hi <= lo) {
    std::fill(dst.begin(), dst.end(), 0.0f);
    return out;
  }
  double inv = 1.0 / (hi - lo);
  for (size_t i = 0; i < vals.size(); ++i) {
    double v = std::clamp(static_cast<double>(vals[i]), lo, hi);
    dst[i] = static_cast<float>(std::clamp((v - lo) * inv, 0.0, 1.0));
  }
  return out;
}

Image resize_bilinear(const Image& image, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: output extent must be >= 1");
  if (image.h() < 1 || image.w() < 1) throw std::invalid_argument("resize_bilinear: empty image");
  if (out_h == image.h() && out_w == image.w()) return image;
  const double rx = static_cast<double>(image.w()) / out_w, ry = static_cast<double>(image.h()) / out_h;
  std::vector<Lerp> lx(out_w);
  for (int i = 0; i < out_w; ++i) lx[i] = lerp_index(i, rx, image.w());
  Image out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    Lerp b = lerp_index(y, ry, image.h());
    for (int x = 0; x < out_w; ++x) {
      const Lerp& a = lx[x];
      double top = image(a.i0, b.i0) * (1 - a.t) + image(a.i1, b.i0) * a.t;
      double bot = image(a.i0, b.i1) * (1 - a.t) + image(a.i1, b.i1) * a.t;
      out(x, y) = static_cast<float>(top * (1 - b.t) + bot * b.t);
    }
  }
  return out;
}

SliceMask resize_nearest(const SliceMask& mask, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_nearest: output extent must be >= 1");
  if (out_h == mask.h() && out_w == mask.w()) return mask;
  const double rx = static_cast<double>(mask.w()) / out_w, ry = static_cast<double>(mask.h()) / out_h;
  SliceMask out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    int sy = nearest_index(y, ry, mask.h());
    for (int x = 0; x < out_w; ++x) out(x, y) = mask(nearest_index(x, rx, mask.w()), sy);
  }
  return out;
}

std::vector<Image> extract_and_resize(const Volume& volume, int extent) {
  if (extent < 1) throw std::invalid_argument("extract_and_resize: extent must be >= 1");
  std::vector<Image> slices;
  slices.reserve(volume.dims().d);
  for (int z = 0; z < volume.dims().d; ++z) {
    slices.push_back(resize_bilinear(volume.intensities.slice_copy(z), extent, extent));
  }
  return slices;
}

}  // namespace mois::io
