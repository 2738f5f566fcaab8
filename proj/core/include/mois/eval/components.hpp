#pragma once

#include <array>
#include <vector>

#include "mois/io/grid.hpp"

namespace mois::eval {

// Neighbourhoods: 6, 18, 26 in 3D; 4 and 8 restrict adjacency to the slice plane.
bool valid_connectivity(int connectivity);
std::vector<std::array<int, 3>> neighbour_offsets(int connectivity);

struct Components {
  LabelVolume labels;           // 0 = background, 1..count
  int count = 0;
  std::vector<int64_t> sizes;   // sizes[label - 1]
  std::vector<int64_t> first;   // scan index of each component's first voxel

  Mask component(int label) const;
};

// Labels are assigned in order of each component's first voxel in scan order.
Components connected_components(const Mask& mask, int connectivity = 26);

// Component labels sorted by size descending, ties by lower label, truncated.
std::vector<int> select_largest(const Components& components, int count);

}  // namespace mois::eval
