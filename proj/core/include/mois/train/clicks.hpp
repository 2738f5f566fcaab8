#pragma once

#include <optional>

#include "mois/click.hpp"
#include "mois/io/grid.hpp"

namespace mois::train {

inline constexpr int kMaxTrainingClicks = 7;  // 1 initial + 6 corrective

// Click number `step` (0-based) for a lesion on one slice: the region centre
// of the ground truth at step 0, the centre of the largest error region
// afterwards. nullopt once the prediction matches or the budget is spent.
// The returned click has slice = `slice`.
std::optional<Click> simulate_training_click(const SliceMask& gt, const SliceMask& pred, int step, int slice = 0,
                                             const Spacing& spacing = {}, int max_clicks = kMaxTrainingClicks);

}  // namespace mois::train
