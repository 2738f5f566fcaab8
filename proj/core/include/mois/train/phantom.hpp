#pragma once

// Synthetic scans: a smooth noisy background with bright homogeneous
// ellipsoids (class A, the segmentation target) and mid-intensity textured
// ellipsoids (class B, distractors).

#include <cstdint>
#include <utility>

#include <json.hpp>

#include "mois/io/volume.hpp"

namespace mois::train {

enum LesionClass : int32_t { kBackground = 0, kClassA = 1, kClassB = 2 };

struct Range {
  double lo = 0;
  double hi = 0;
  bool operator==(const Range&) const = default;
};

struct ObjectClass {
  Range count;            // inclusive integer range
  Range radius_mm;        // in-plane semi-axes
  Range depth_mm;         // semi-axis along slices
  Range intensity;        // mean intensity per object
  double texture = 0.0;   // amplitude of the in-object texture pattern
  bool operator==(const ObjectClass&) const = default;
};

struct PhantomConfig {
  Dims dims{96, 96, 8};
  Spacing spacing{1.5, 1.5, 6.0};
  ObjectClass lesion{{5, 8}, {7, 12}, {8, 15}, {0.85, 1.0}, 0.0};
  ObjectClass distractor{{2, 4}, {7, 13}, {8, 15}, {0.55, 0.7}, 0.15};
  double background = 0.25;
  double background_variation = 0.08;
  double noise = 0.06;
  double edge_width = 0.6;  // voxels; width of the intensity ramp at object borders
  int margin = 2;          // free voxels between objects and to the in-plane border
  int max_attempts = 400;  // placement retries per object

  void validate() const;
  bool operator==(const PhantomConfig&) const = default;
};

void to_json(nlohmann::json& j, const PhantomConfig& c);
void from_json(const nlohmann::json& j, PhantomConfig& c);

struct Phantom {
  io::Volume volume;
  LabelVolume instances;  // class-A lesion ids 1..lesions, 0 elsewhere
  LabelVolume classes;    // LesionClass per voxel
  int lesions = 0;
  int distractors = 0;

  Mask lesion_mask() const;              // all class-A voxels
  Mask class_mask(int32_t cls) const;
  Mask instance_mask(int32_t id) const;
};

// Deterministic for a given (config, seed). Throws std::runtime_error when an
// object cannot be placed without overlap after max_attempts tries.
Phantom generate_phantom(const PhantomConfig& config, uint64_t seed);

}  // namespace mois::train
