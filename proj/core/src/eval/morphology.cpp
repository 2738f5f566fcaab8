#include "mois/eval/morphology.hpp"

#include <vector>

#include "mois/eval/components.hpp"

namespace mois::eval {

Mask remove_small_components(const Mask& mask, double v_thresh, const Spacing& spacing, int connectivity) {
  Components cc = connected_components(mask, connectivity);
  const double voxel = spacing.voxel_volume();
  std::vector<uint8_t> keep(cc.count + 1, 0);
  for (int l = 1; l <= cc.count; ++l) keep[l] = static_cast<double>(cc.sizes[l - 1]) * voxel >= v_thresh;
  Mask out(mask.dims());
  for (int64_t i = 0; i < mask.size(); ++i) out[i] = keep[cc.labels[i]];
  return out;
}

namespace {

// Fills one h x w plane in place.
void fill_plane(uint8_t* px, int h, int w) {
  std::vector<uint8_t> outside(static_cast<size_t>(h) * w, 0);
  std::vector<int64_t> stack;
  auto seed = [&](int x, int y) {
    int64_t i = static_cast<int64_t>(y) * w + x;
    if (!px[i] && !outside[i]) {
      outside[i] = 1;
      stack.push_back(i);
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(x, 0);
    seed(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    seed(0, y);
    seed(w - 1, y);
  }
  while (!stack.empty()) {
    int64_t i = stack.back();
    stack.pop_back();
    int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
    if (x > 0) seed(x - 1, y);
    if (x + 1 < w) seed(x + 1, y);
    if (y > 0) seed(x, y - 1);
    if (y + 1 < h) seed(x, y + 1);
  }
  for (size_t i = 0; i < outside.size(); ++i) px[i] = outside[i] ? px[i] : 1;
}

}  // namespace

Mask fill_holes(const Mask& mask) {
  Mask out = mask;
  const Dims d = mask.dims();
  for (int z = 0; z < d.d; ++z) fill_plane(out.slice(z).data(), d.h, d.w);
  return out;
}

SliceMask fill_holes(const SliceMask& mask) {
  SliceMask out = mask;
  if (out.size() > 0) fill_plane(out.values().data(), out.h(), out.w());
  return out;
}

}  // namespace mois::eval
