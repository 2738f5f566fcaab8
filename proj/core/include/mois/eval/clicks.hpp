#pragma once

#include <optional>

#include "mois/click.hpp"
#include "mois/io/grid.hpp"

namespace mois::eval {

// Voxel nearest (spacing-weighted) to the physical centroid of the region,
// preferring the rounded centroid itself when it lies inside. Ties go to the
// lower scan index.
Click region_center_click(const Mask& region, const Spacing& spacing, bool positive);

// Foreground click at the lesion's 3D centroid. Throws on an empty lesion.
Click simulate_initial_click(const Mask& lesion, const Spacing& spacing);

// Click at the centre of the largest error region. False-negative and
// false-positive voxels form separate regions; the largest one wins, ties by
// lower first-voxel scan index. nullopt when pred == gt.
std::optional<Click> simulate_correction_click(const Mask& pred, const Mask& gt, const Spacing& spacing,
                                               int connectivity = 26);

}  // namespace mois::eval
