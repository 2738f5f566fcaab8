#include "mois/train/sample.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "mois/io/preproc.hpp"

namespace mois::train {

void TrainingSample::validate() const {
  const size_t d = slices.size();
  if (semantic.size() != d || instance.size() != prompted.size()) throw std::logic_error("TrainingSample: inconsistent sizes");
  for (size_t k = 0; k < prompted.size(); ++k) {
    if (instance[k].size() != d) throw std::logic_error("TrainingSample: instance mask count != window");
    int64_t area = 0;
    for (size_t i = 0; i < d; ++i) {
      for (int64_t p = 0; p < instance[k][i].size(); ++p) {
        if (instance[k][i][p] && !semantic[i][p]) throw std::logic_error("TrainingSample: instance mask outside semantic mask");
        area += instance[k][i][p];
      }
    }
    if (area == 0) throw std::logic_error("TrainingSample: prompted lesion " + std::to_string(prompted[k]) + " not visible");
  }
}

PreparedScan prepare_scan(const Phantom& phantom, double p_low, double p_high) {
  PreparedScan s;
  io::Volume norm = io::normalize_percentile(phantom.volume, p_low, p_high);
  const Dims dims = phantom.volume.dims();
  for (int z = 0; z < dims.d; ++z) {
    s.slices.push_back(norm.intensities.slice_copy(z));
    s.instances.push_back(phantom.instances.slice_copy(z));
    s.classes.push_back(phantom.classes.slice_copy(z));
  }
  s.lesions = phantom.lesions;
  return s;
}

TrainingSample make_sample(const PreparedScan& scan, const SampleConfig& config, const AugmentConfig& augment,
                           std::mt19937_64& rng) {
  const int depth = static_cast<int>(scan.slices.size());
  if (config.window < 1 || config.window > depth) {
    throw std::invalid_argument("make_sample: window " + std::to_string(config.window) + " does not fit depth " +
                                std::to_string(depth));
  }
  if (config.max_prompted < 1) throw std::invalid_argument("make_sample: max_prompted must be >= 1");
  const int s = config.input_size;
  for (int attempt = 0; attempt < 32; ++attempt) {
    const int z0 = std::uniform_int_distribution<int>(0, depth - config.window)(rng);
    const Affine2 t = Affine2::sample(augment, rng);
    TrainingSample out;
    out.first_slice = z0;
    std::vector<Grid2<int32_t>> inst;
    std::map<int, int64_t> area;
    for (int i = 0; i < config.window; ++i) {
      out.slices.push_back(warp_image(scan.slices[z0 + i], t, s, s));
      inst.push_back(warp_labels(scan.instances[z0 + i], t, s, s));
      auto cls = warp_labels(scan.classes[z0 + i], t, s, s);
      SliceMask sem(s, s);
      for (int64_t p = 0; p < sem.size(); ++p) {
        sem[p] = cls[p] == kClassA;
        if (inst.back()[p] > 0) ++area[inst.back()[p]];
      }
      out.semantic.push_back(std::move(sem));
    }
    std::vector<int> visible;
    for (const auto& [id, a] : area)
      if (a >= config.min_pixels) visible.push_back(id);
    if (visible.empty()) continue;
    std::shuffle(visible.begin(), visible.end(), rng);
    const int n = std::uniform_int_distribution<int>(1, std::min<int>(config.max_prompted, visible.size()))(rng);
    for (int k = 0; k < n; ++k) {
      out.prompted.push_back(visible[k]);
      std::vector<SliceMask> per_slice;
      for (int i = 0; i < config.window; ++i) {
        SliceMask m(s, s);
        for (int64_t p = 0; p < m.size(); ++p) m[p] = inst[i][p] == visible[k];
        per_slice.push_back(std::move(m));
      }
      out.instance.push_back(std::move(per_slice));
    }
    return out;
  }
  throw std::runtime_error("make_sample: no visible lesion found in 32 draws");
}

}  // namespace mois::train
