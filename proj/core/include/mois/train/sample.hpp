#pragma once

#include <random>
#include <vector>

#include "mois/io/grid.hpp"
#include "mois/train/augment.hpp"
#include "mois/train/phantom.hpp"

namespace mois::train {

// A window of consecutive slices at network resolution.
struct TrainingSample {
  std::vector<Image> slices;                     // D_train images, input_size^2
  std::vector<int> prompted;                     // lesion ids, in processing order
  std::vector<std::vector<SliceMask>> instance;  // [prompted lesion][slice]
  std::vector<SliceMask> semantic;               // all class-A lesions per slice
  int first_slice = 0;                           // window start in the source scan

  // Throws std::logic_error if the invariants are violated (instance masks
  // outside the semantic mask, a prompted lesion absent from the window).
  void validate() const;
};

// A phantom prepared for sampling: intensities normalized once.
struct PreparedScan {
  std::vector<Image> slices;  // normalized, native resolution
  std::vector<Grid2<int32_t>> instances;
  std::vector<Grid2<int32_t>> classes;
  int lesions = 0;
};

PreparedScan prepare_scan(const Phantom& phantom, double p_low = 0.5, double p_high = 99.5);

struct SampleConfig {
  int window = 4;        // D_train
  int max_prompted = 3;  // N_train
  int input_size = 128;
  int min_pixels = 4;    // smallest visible cross-section counted as present
};

// Random window, augmentation and prompted-lesion subset. Retries the draw a
// bounded number of times; throws std::runtime_error if the scan has no
// visible lesion.
TrainingSample make_sample(const PreparedScan& scan, const SampleConfig& config, const AugmentConfig& augment,
                           std::mt19937_64& rng);

}  // namespace mois::train
