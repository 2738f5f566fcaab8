#pragma once

#include <optional>
#include <vector>

#include "mois/eval/components.hpp"
#include "mois/io/grid.hpp"

namespace mois::eval {

// 2|P&G| / (|P|+|G|); 1 when both are empty.
double dsc(const Mask& pred, const Mask& gt);

struct LesionRow {
  int gt_id = 0;
  std::vector<int> pred_ids;   // predicted components matching at IoU >= threshold
  double best_iou = 0.0;
  bool detected = false;
  double dsc = 0.0;            // against the union of pred_ids; 0 when undetected
};

struct Detection {
  Components gt;
  Components pred;
  std::vector<LesionRow> rows;       // one per counted GT lesion
  std::vector<int> false_positives;  // counted predicted components with no match
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double f1 = 1.0;
};

// Lesion detection at an IoU threshold. GT lesions that intersect `excluded`
// (when given), and predicted components matching any of them, are left out
// of the counts.
Detection lesion_f1(const Mask& pred, const Mask& gt, double iou_threshold = 0.1, int connectivity = 26,
                    const Mask* excluded = nullptr);

// Mean DSC over detected lesions; nullopt when nothing was detected.
std::optional<double> lesionwise_dsc(const Detection& detection);

}  // namespace mois::eval
