#include "mois/train/clicks.hpp"

#include <stdexcept>

#include "mois/eval/clicks.hpp"

namespace mois::train {

namespace {

Mask as_volume(const SliceMask& m) { return Mask(Dims{m.h(), m.w(), 1}, m.values()); }

}  // namespace

std::optional<Click> simulate_training_click(const SliceMask& gt, const SliceMask& pred, int step, int slice,
                                             const Spacing& spacing, int max_clicks) {
  if (step < 0) throw std::invalid_argument("simulate_training_click: negative step");
  if (gt.h() != pred.h() || gt.w() != pred.w()) throw std::invalid_argument("simulate_training_click: extent mismatch");
  if (step >= max_clicks) return std::nullopt;
  std::optional<Click> c;
  if (step == 0) {
    c = eval::simulate_initial_click(as_volume(gt), spacing);
  } else {
    c = eval::simulate_correction_click(as_volume(pred), as_volume(gt), spacing, 8);
  }
  if (c) c->slice = slice;
  return c;
}

}  // namespace mois::train
