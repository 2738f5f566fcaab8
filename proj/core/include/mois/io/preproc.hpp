#pragma once

#include <vector>

#include "mois/io/grid.hpp"
#include "mois/io/volume.hpp"

namespace mois::io {

// Output extent along each axis is round(extent * spacing / target); voxel
// centres are aligned (half-voxel convention). Throws if any extent rounds to 0.
Dims resampled_dims(Dims dims, const Spacing& source, const Spacing& target);
Volume resample_spacing(const Volume& volume, const Spacing& target);
Mask resample_mask(const Mask& mask, const Spacing& source, const Spacing& target);

// Percentile with linear interpolation between closest ranks:
// position p/100 * (n-1) in the sorted sample.
double percentile(std::vector<float> values, double p);

// Clips to [q_low, q_high] and maps that range onto [0, 1]; all zeros when the
// two percentiles coincide.
Volume normalize_percentile(const Volume& volume, double p_low = 0.5, double p_high = 99.5);

Image resize_bilinear(const Image& image, int out_h, int out_w);
SliceMask resize_nearest(const SliceMask& mask, int out_h, int out_w);

// Slices along the third axis, each resized to extent x extent.
std::vector<Image> extract_and_resize(const Volume& volume, int extent);

}  // namespace mois::io
