#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mois {

// Extents of a scan: h rows, w columns, d slices. Voxel (x, y, z) lives at
// index (z * h + y) * w + x, so every slice is contiguous.
struct Dims {
  int h = 0;
  int w = 0;
  int d = 0;

  int64_t voxels() const { return static_cast<int64_t>(h) * w * d; }
  int64_t slice_pixels() const { return static_cast<int64_t>(h) * w; }
  bool operator==(const Dims&) const = default;
  std::string str() const { return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(d); }
};

// Physical voxel size in millimetres along columns (x), rows (y) and slices (z).
struct Spacing {
  double x = 1.0;
  double y = 1.0;
  double z = 1.0;

  double voxel_volume() const { return x * y * z; }
  bool operator==(const Spacing&) const = default;
};

template <typename V>
class Grid2 {
 public:
  Grid2() = default;
  Grid2(int h, int w, V fill = V{}) : h_(h), w_(w), values_(static_cast<size_t>(h) * w, fill) {
    if (h < 0 || w < 0) throw std::invalid_argument("Grid2: negative extent");
  }
  Grid2(int h, int w, std::vector<V> values) : h_(h), w_(w), values_(std::move(values)) {
    if (static_cast<int64_t>(values_.size()) != static_cast<int64_t>(h) * w) {
      throw std::invalid_argument("Grid2: value count does not match extents");
    }
  }

  int h() const { return h_; }
  int w() const { return w_; }
  int64_t size() const { return static_cast<int64_t>(values_.size()); }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < w_ && y < h_; }

  V& operator()(int x, int y) { return values_[static_cast<size_t>(y) * w_ + x]; }
  const V& operator()(int x, int y) const { return values_[static_cast<size_t>(y) * w_ + x]; }
  V& operator[](int64_t i) { return values_[i]; }
  const V& operator[](int64_t i) const { return values_[i]; }

  std::vector<V>& values() { return values_; }
  const std::vector<V>& values() const { return values_; }
  bool operator==(const Grid2&) const = default;

 private:
  int h_ = 0;
  int w_ = 0;
  std::vector<V> values_;
};

template <typename V>
class Grid3 {
 public:
  Grid3() = default;
  explicit Grid3(Dims dims, V fill = V{}) : dims_(dims), values_(dims.voxels() > 0 ? dims.voxels() : 0, fill) {
    if (dims.h < 0 || dims.w < 0 || dims.d < 0) throw std::invalid_argument("Grid3: negative extent");
  }
  Grid3(Dims dims, std::vector<V> values) : dims_(dims), values_(std::move(values)) {
    if (static_cast<int64_t>(values_.size()) != dims.voxels()) {
      throw std::invalid_argument("Grid3: " + std::to_string(values_.size()) + " values for extents " + dims.str());
    }
  }

  const Dims& dims() const { return dims_; }
  int64_t size() const { return static_cast<int64_t>(values_.size()); }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims_.w && y < dims_.h && z < dims_.d;
  }
  int64_t index(int x, int y, int z) const { return (static_cast<int64_t>(z) * dims_.h + y) * dims_.w + x; }

  V& operator()(int x, int y, int z) { return values_[index(x, y, z)]; }
  const V& operator()(int x, int y, int z) const { return values_[index(x, y, z)]; }
  V& operator[](int64_t i) { return values_[i]; }
  const V& operator[](int64_t i) const { return values_[i]; }

  std::span<V> slice(int z) { return {values_.data() + z * dims_.slice_pixels(), static_cast<size_t>(dims_.slice_pixels())}; }
  std::span<const V> slice(int z) const {
    return {values_.data() + z * dims_.slice_pixels(), static_cast<size_t>(dims_.slice_pixels())};
  }
  Grid2<V> slice_copy(int z) const {
    auto s = slice(z);
    return Grid2<V>(dims_.h, dims_.w, std::vector<V>(s.begin(), s.end()));
  }
  void set_slice(int z, const Grid2<V>& g) {
    if (g.h() != dims_.h || g.w() != dims_.w) throw std::invalid_argument("Grid3::set_slice: extent mismatch");
    std::copy(g.values().begin(), g.values().end(), slice(z).begin());
  }

  std::vector<V>& values() { return values_; }
  const std::vector<V>& values() const { return values_; }
  bool operator==(const Grid3&) const = default;

 private:
  Dims dims_;
  std::vector<V> values_;
};

using Image = Grid2<float>;
using SliceMask = Grid2<uint8_t>;
using Mask = Grid3<uint8_t>;
using LabelVolume = Grid3<int32_t>;

inline int64_t count_foreground(const Mask& m) {
  int64_t n = 0;
  for (auto v : m.values()) n += v != 0;
  return n;
}

inline int64_t count_foreground(const SliceMask& m) {
  int64_t n = 0;
  for (auto v : m.values()) n += v != 0;
  return n;
}

}  // namespace mois
