#include "mois/eval/clicks.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mois/eval/components.hpp"

namespace mois::eval {

Click region_center_click(const Mask& region, const Spacing& spacing, bool positive) {
  const Dims d = region.dims();
  double sx = 0, sy = 0, sz = 0;
  int64_t n = 0;
  for (int z = 0; z < d.d; ++z)
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x)
        if (region(x, y, z)) {
          sx += x;
          sy += y;
          sz += z;
          ++n;
        }
  if (n == 0) throw std::invalid_argument("click simulation on an empty region");
  const double cx = sx / n, cy = sy / n, cz = sz / n;
  const int rx = static_cast<int>(std::lround(cx)), ry = static_cast<int>(std::lround(cy)),
            rz = static_cast<int>(std::lround(cz));
  if (region.contains(rx, ry, rz) && region(rx, ry, rz)) return {rx, ry, rz, positive};

  // Centroid falls outside: nearest member voxel in millimetres.
  double best = std::numeric_limits<double>::infinity();
  Click click{0, 0, 0, positive};
  for (int z = 0; z < d.d; ++z)
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x) {
        if (!region(x, y, z)) continue;
        double dx = (x - cx) * spacing.x, dy = (y - cy) * spacing.y, dz = (z - cz) * spacing.z;
        double dist = dx * dx + dy * dy + dz * dz;
        if (dist < best) {
          best = dist;
          click = {x, y, z, positive};
        }
      }
  return click;
}

Click simulate_initial_click(const Mask& lesion, const Spacing& spacing) {
  return region_center_click(lesion, spacing, true);
}

std::optional<Click> simulate_correction_click(const Mask& pred, const Mask& gt, const Spacing& spacing,
                                               int connectivity) {
  if (!(pred.dims() == gt.dims())) {
    throw std::invalid_argument("correction click: extents " + pred.dims().str() + " vs " + gt.dims().str());
  }
  Mask fn(gt.dims()), fp(gt.dims());
  bool any = false;
  for (int64_t i = 0; i < gt.size(); ++i) {
    fn[i] = gt[i] && !pred[i];
    fp[i] = pred[i] && !gt[i];
    any = any || fn[i] || fp[i];
  }
  if (!any) return std::nullopt;
  Components cfn = connected_components(fn, connectivity);
  Components cfp = connected_components(fp, connectivity);
  int64_t best_size = -1, best_first = 0;
  const Components* best_cc = nullptr;
  int best_label = 0;
  for (const Components* cc : {&cfn, &cfp}) {
    for (int l = 1; l <= cc->count; ++l) {
      int64_t size = cc->sizes[l - 1], first = cc->first[l - 1];
      if (size > best_size || (size == best_size && first < best_first)) {
        best_size = size;
        best_first = first;
        best_cc = cc;
        best_label = l;
      }
    }
  }
  return region_center_click(best_cc->component(best_label), spacing, best_cc == &cfn);
}

}  // namespace mois::eval
