#pragma once

#include "mois/io/grid.hpp"

namespace mois::eval {

// Drops components whose physical volume (voxels * voxel volume, mm^3) is
// below v_thresh.
Mask remove_small_components(const Mask& mask, double v_thresh, const Spacing& spacing, int connectivity = 26);

// Per slice: fills background regions that cannot reach the slice border
// through 4-connected background.
Mask fill_holes(const Mask& mask);
SliceMask fill_holes(const SliceMask& mask);

}  // namespace mois::eval
