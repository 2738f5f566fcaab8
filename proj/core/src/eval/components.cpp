#include "mois/eval/components.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mois::eval {

bool valid_connectivity(int c) { return c == 4 || c == 8 || c == 6 || c == 18 || c == 26; }

std::vector<std::array<int, 3>> neighbour_offsets(int connectivity) {
  if (!valid_connectivity(connectivity)) {
    throw std::invalid_argument("connectivity must be 4, 8, 6, 18 or 26, got " + std::to_string(connectivity));
  }
  const bool planar = connectivity == 4 || connectivity == 8;
  const int max_l1 = (connectivity == 4 || connectivity == 6) ? 1 : connectivity == 18 ? 2 : 3;
  std::vector<std::array<int, 3>> out;
  for (int dz = -1; dz <= 1; ++dz) {
    if (planar && dz != 0) continue;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        int l1 = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (l1 == 0 || l1 > max_l1) continue;
        out.push_back({dx, dy, dz});
      }
    }
  }
  return out;
}

Mask Components::component(int label) const {
  Mask m(labels.dims());
  for (int64_t i = 0; i < labels.size(); ++i) m[i] = labels[i] == label;
  return m;
}

Components connected_components(const Mask& mask, int connectivity) {
  const auto offsets = neighbour_offsets(connectivity);
  const Dims d = mask.dims();
  Components out;
  out.labels = LabelVolume(d, 0);
  std::vector<int64_t> stack;
  for (int64_t seed = 0; seed < mask.size(); ++seed) {
    if (!mask[seed] || out.labels[seed]) continue;
    const int label = ++out.count;
    out.first.push_back(seed);
    int64_t size = 0;
    out.labels[seed] = label;
    stack.assign(1, seed);
    while (!stack.empty()) {
      int64_t i = stack.back();
      stack.pop_back();
      ++size;
      int x = static_cast<int>(i % d.w);
      int y = static_cast<int>((i / d.w) % d.h);
      int z = static_cast<int>(i / d.slice_pixels());
      for (const auto& o : offsets) {
        int nx = x + o[0], ny = y + o[1], nz = z + o[2];
        if (!mask.contains(nx, ny, nz)) continue;
        int64_t j = mask.index(nx, ny, nz);
        if (mask[j] && !out.labels[j]) {
          out.labels[j] = label;
          stack.push_back(j);
        }
      }
    }
    out.sizes.push_back(size);
  }
  return out;
}

std::vector<int> select_largest(const Components& components, int count) {
  std::vector<int> ids(components.count);
  std::iota(ids.begin(), ids.end(), 1);
  std::stable_sort(ids.begin(), ids.end(),
                   [&](int a, int b) { return components.sizes[a - 1] > components.sizes[b - 1]; });
  if (count < 0) count = 0;
  if (static_cast<int>(ids.size()) > count) ids.resize(count);
  return ids;
}

}  // namespace mois::eval
