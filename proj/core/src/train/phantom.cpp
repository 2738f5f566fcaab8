#include "mois/train/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace mois::train {

namespace {

void check_range(const Range& r, const char* what, double floor) {
  if (!(r.lo >= floor) || !(r.hi >= r.lo)) {
    throw std::invalid_argument(std::string("PhantomConfig: bad ") + what + " range [" + std::to_string(r.lo) + ", " +
                                std::to_string(r.hi) + "]");
  }
}

void check_class(const ObjectClass& c, const char* what) {
  check_range(c.count, what, 0);
  check_range(c.radius_mm, what, 1e-6);
  check_range(c.depth_mm, what, 1e-6);
  check_range(c.intensity, what, -1e9);
  if (c.texture < 0) throw std::invalid_argument(std::string("PhantomConfig: negative texture for ") + what);
}

double uniform(std::mt19937_64& rng, const Range& r) {
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

int uniform_int(std::mt19937_64& rng, const Range& r) {
  return std::uniform_int_distribution<int>(static_cast<int>(r.lo), static_cast<int>(r.hi))(rng);
}

struct Ellipsoid {
  double cx, cy, cz;  // voxel coordinates
  double a, b, c;     // semi-axes in voxels
  double angle;       // in-plane rotation
  double intensity;
  double phase;       // texture phase

  double level(double x, double y, double z) const {
    const double dx = x - cx, dy = y - cy;
    const double u = (std::cos(angle) * dx + std::sin(angle) * dy) / a;
    const double v = (-std::sin(angle) * dx + std::cos(angle) * dy) / b;
    const double w = (z - cz) / c;
    return u * u + v * v + w * w;
  }
};

}  // namespace

void PhantomConfig::validate() const {
  if (dims.h < 8 || dims.w < 8 || dims.d < 1) throw std::invalid_argument("PhantomConfig: extents too small: " + dims.str());
  if (!(spacing.x > 0 && spacing.y > 0 && spacing.z > 0)) throw std::invalid_argument("PhantomConfig: spacing must be positive");
  check_class(lesion, "lesion");
  check_class(distractor, "distractor");
  if (lesion.intensity == distractor.intensity && lesion.texture == distractor.texture) {
    throw std::invalid_argument("PhantomConfig: lesion and distractor classes are indistinguishable");
  }
  if (noise < 0 || background_variation < 0) throw std::invalid_argument("PhantomConfig: negative noise");
  if (!(edge_width > 0)) throw std::invalid_argument("PhantomConfig: edge_width must be positive");
  if (margin < 0 || max_attempts < 1) throw std::invalid_argument("PhantomConfig: bad placement settings");
}

namespace {

nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }
Range range_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

nlohmann::json class_json(const ObjectClass& c) {
  return {{"count", range_json(c.count)},         {"radius_mm", range_json(c.radius_mm)},
          {"depth_mm", range_json(c.depth_mm)},   {"intensity", range_json(c.intensity)},
          {"texture", c.texture}};
}

ObjectClass class_from(const nlohmann::json& j, ObjectClass c) {
  if (j.contains("count")) c.count = range_from(j["count"]);
  if (j.contains("radius_mm")) c.radius_mm = range_from(j["radius_mm"]);
  if (j.contains("depth_mm")) c.depth_mm = range_from(j["depth_mm"]);
  if (j.contains("intensity")) c.intensity = range_from(j["intensity"]);
  c.texture = j.value("texture", c.texture);
  return c;
}

}  // namespace

void to_json(nlohmann::json& j, const PhantomConfig& c) {
  j = {{"shape", {c.dims.h, c.dims.w, c.dims.d}},
       {"spacing", {c.spacing.x, c.spacing.y, c.spacing.z}},
       {"lesion", class_json(c.lesion)},
       {"distractor", class_json(c.distractor)},
       {"background", c.background},
       {"background_variation", c.background_variation},
       {"noise", c.noise},
       {"edge_width", c.edge_width},
       {"margin", c.margin},
       {"max_attempts", c.max_attempts}};
}

void from_json(const nlohmann::json& j, PhantomConfig& c) {
  c = PhantomConfig{};
  if (j.contains("shape")) c.dims = {j["shape"].at(0).get<int>(), j["shape"].at(1).get<int>(), j["shape"].at(2).get<int>()};
  if (j.contains("spacing")) {
    c.spacing = {j["spacing"].at(0).get<double>(), j["spacing"].at(1).get<double>(), j["spacing"].at(2).get<double>()};
  }
  if (j.contains("lesion")) c.lesion = class_from(j["lesion"], c.lesion);
  if (j.contains("distractor")) c.distractor = class_from(j["distractor"], c.distractor);
  c.background = j.value("background", c.background);
  c.background_variation = j.value("background_variation", c.background_variation);
  c.noise = j.value("noise", c.noise);
  c.edge_width = j.value("edge_width", c.edge_width);
  c.margin = j.value("margin", c.margin);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  c.validate();
}

Mask Phantom::lesion_mask() const { return class_mask(kClassA); }

Mask Phantom::class_mask(int32_t cls) const {
  Mask m(classes.dims());
  for (int64_t i = 0; i < m.size(); ++i) m[i] = classes[i] == cls;
  return m;
}

Mask Phantom::instance_mask(int32_t id) const {
  Mask m(instances.dims());
  for (int64_t i = 0; i < m.size(); ++i) m[i] = instances[i] == id;
  return m;
}

Phantom generate_phantom(const PhantomConfig& config, uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const Dims dims = config.dims;
  Phantom ph;
  ph.instances = LabelVolume(dims);
  ph.classes = LabelVolume(dims);
  // Objects owned per voxel, including the margin shell, to keep them apart.
  Grid3<uint8_t> occupied(dims);

  auto place = [&](const ObjectClass& cls, int32_t label, int32_t id, std::vector<Ellipsoid>& out) {
    for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
      Ellipsoid e{};
      e.a = uniform(rng, cls.radius_mm) / config.spacing.x;
      e.b = uniform(rng, cls.radius_mm) / config.spacing.y;
      e.c = uniform(rng, cls.depth_mm) / config.spacing.z;
      e.angle = std::uniform_real_distribution<double>(0, std::numbers::pi)(rng);
      e.intensity = uniform(rng, cls.intensity);
      e.phase = std::uniform_real_distribution<double>(0, 2 * std::numbers::pi)(rng);
      const double reach = std::max(e.a, e.b);
      const double lo_xy = reach + config.margin, hi_x = dims.w - 1 - reach - config.margin,
                   hi_y = dims.h - 1 - reach - config.margin;
      if (hi_x < lo_xy || hi_y < lo_xy) continue;
      e.cx = std::uniform_real_distribution<double>(lo_xy, hi_x)(rng);
      e.cy = std::uniform_real_distribution<double>(lo_xy, hi_y)(rng);
      e.cz = std::uniform_real_distribution<double>(0, dims.d - 1)(rng);

      // Voxel set of the object and of its margin shell.
      const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - reach)) - config.margin);
      const int x1 = std::min(dims.w - 1, static_cast<int>(std::ceil(e.cx + reach)) + config.margin);
      const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - reach)) - config.margin);
      const int y1 = std::min(dims.h - 1, static_cast<int>(std::ceil(e.cy + reach)) + config.margin);
      const int z0 = std::max(0, static_cast<int>(std::floor(e.cz - e.c)) - 1);
      const int z1 = std::min(dims.d - 1, static_cast<int>(std::ceil(e.cz + e.c)) + 1);
      std::vector<int64_t> inside;
      bool clash = false;
      for (int z = z0; z <= z1 && !clash; ++z)
        for (int y = y0; y <= y1 && !clash; ++y)
          for (int x = x0; x <= x1; ++x) {
            if (e.level(x, y, z) <= 1.0) {
              inside.push_back(ph.classes.index(x, y, z));
              if (occupied(x, y, z)) {
                clash = true;
                break;
              }
            }
          }
      if (clash || inside.empty()) continue;
      // Reject if any voxel within the margin (in-plane) or one slice away is taken.
      const int m = std::max(config.margin, 1);
      for (int64_t idx : inside) {
        const int x = static_cast<int>(idx % dims.w), y = static_cast<int>(idx / dims.w % dims.h),
                  z = static_cast<int>(idx / dims.slice_pixels());
        for (int dz = -1; dz <= 1 && !clash; ++dz)
          for (int dy = -m; dy <= m && !clash; ++dy)
            for (int dx = -m; dx <= m; ++dx) {
              if (ph.classes.contains(x + dx, y + dy, z + dz) && occupied(x + dx, y + dy, z + dz)) {
                clash = true;
                break;
              }
            }
        if (clash) break;
      }
      if (clash) continue;
      for (int64_t idx : inside) {
        occupied[idx] = 1;
        ph.classes[idx] = label;
        if (id > 0) ph.instances[idx] = id;
      }
      out.push_back(e);
      return;
    }
    throw std::runtime_error("generate_phantom: could not place object " + std::to_string(out.size() + 1) + " of class " +
                             std::to_string(label) + " without overlap after " + std::to_string(config.max_attempts) +
                             " attempts (seed " + std::to_string(seed) + ")");
  };

  std::vector<Ellipsoid> lesions, distractors;
  const int n_lesions = uniform_int(rng, config.lesion.count);
  const int n_distractors = uniform_int(rng, config.distractor.count);
  for (int i = 0; i < n_lesions; ++i) place(config.lesion, kClassA, i + 1, lesions);
  for (int i = 0; i < n_distractors; ++i) place(config.distractor, kClassB, 0, distractors);
  ph.lesions = n_lesions;
  ph.distractors = n_distractors;

  // Background: a few low-frequency waves.
  struct Wave {
    double fx, fy, fz, phase, amp;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 3; ++i) {
    std::uniform_real_distribution<double> f(0.5, 2.0), p(0, 2 * std::numbers::pi);
    waves.push_back({f(rng) / dims.w, f(rng) / dims.h, 0.3 * f(rng) / std::max(dims.d, 1), p(rng),
                     config.background_variation / 3.0});
  }
  std::normal_distribution<double> noise(0.0, config.noise);

  Grid3<float> img(dims);
  for (int z = 0; z < dims.d; ++z)
    for (int y = 0; y < dims.h; ++y)
      for (int x = 0; x < dims.w; ++x) {
        double v = config.background;
        for (const auto& wv : waves) {
          v += wv.amp * std::sin(2 * std::numbers::pi * (wv.fx * x + wv.fy * y + wv.fz * z) + wv.phase);
        }
        img(x, y, z) = static_cast<float>(v);
      }
  // Objects blend into the background over a soft (partial-volume) rim.
  auto paint = [&](const std::vector<Ellipsoid>& objs, const ObjectClass& ocfg) {
    for (const auto& e : objs) {
      const double reach = std::max(e.a, e.b) + 2;
      const double scale = std::min(e.a, e.b) / config.edge_width;
      const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - reach))),
                x1 = std::min(dims.w - 1, static_cast<int>(std::ceil(e.cx + reach)));
      const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - reach))),
                y1 = std::min(dims.h - 1, static_cast<int>(std::ceil(e.cy + reach)));
      const int z0 = std::max(0, static_cast<int>(std::floor(e.cz - e.c)) - 1),
                z1 = std::min(dims.d - 1, static_cast<int>(std::ceil(e.cz + e.c)) + 1);
      for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
          for (int x = x0; x <= x1; ++x) {
            const double w = 1.0 / (1.0 + std::exp(-(1.0 - std::sqrt(e.level(x, y, z))) * scale));
            if (w < 1e-3) continue;
            const double obj = e.intensity + ocfg.texture * std::sin(1.3 * x + e.phase) * std::cos(1.1 * y - e.phase);
            img(x, y, z) = static_cast<float>(img(x, y, z) * (1 - w) + obj * w);
          }
    }
  };
  paint(lesions, config.lesion);
  paint(distractors, config.distractor);
  for (auto& v : img.values()) v = static_cast<float>(v + noise(rng));

  ph.volume.intensities = std::move(img);
  ph.volume.spacing = config.spacing;
  ph.volume.metadata = {{"generator", "phantom"},
                        {"seed", std::to_string(seed)},
                        {"lesions", std::to_string(n_lesions)},
                        {"distractors", std::to_string(n_distractors)}};
  return ph;
}

}  // namespace mois::train
