#include "mois/eval/metrics.hpp"

#include <map>
#include <stdexcept>

namespace mois::eval {

namespace {

void check_extents(const Mask& a, const Mask& b, const char* what) {
  if (!(a.dims() == b.dims())) {
    throw std::invalid_argument(std::string(what) + ": extents " + a.dims().str() + " vs " + b.dims().str());
  }
}

}  // namespace

double dsc(const Mask& pred, const Mask& gt) {
  check_extents(pred, gt, "dsc");
  int64_t p = 0, g = 0, both = 0;
  for (int64_t i = 0; i < gt.size(); ++i) {
    p += pred[i] != 0;
    g += gt[i] != 0;
    both += pred[i] && gt[i];
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

Detection lesion_f1(const Mask& pred, const Mask& gt, double iou_threshold, int connectivity, const Mask* excluded) {
  check_extents(pred, gt, "lesion_f1");
  if (!(iou_threshold > 0 && iou_threshold <= 1)) throw std::invalid_argument("iou_threshold must lie in (0, 1]");
  if (excluded) check_extents(*excluded, gt, "lesion_f1 exclusion");
  Detection det;
  det.gt = connected_components(gt, connectivity);
  det.pred = connected_components(pred, connectivity);

  // Pairwise overlaps between GT lesions and predicted components.
  std::map<std::pair<int, int>, int64_t> overlap;
  std::vector<uint8_t> gt_excluded(det.gt.count + 1, 0);
  for (int64_t i = 0; i < gt.size(); ++i) {
    int g = det.gt.labels[i], p = det.pred.labels[i];
    if (g && p) ++overlap[{g, p}];
    if (g && excluded && (*excluded)[i]) gt_excluded[g] = 1;
  }

  std::vector<std::vector<int>> matches(det.gt.count + 1);
  std::vector<double> best_iou(det.gt.count + 1, 0.0);
  std::vector<uint8_t> pred_matched(det.pred.count + 1, 0);
  for (const auto& [key, inter] : overlap) {
    auto [g, p] = key;
    double uni = static_cast<double>(det.gt.sizes[g - 1] + det.pred.sizes[p - 1] - inter);
    double iou = static_cast<double>(inter) / uni;
    if (iou > best_iou[g]) best_iou[g] = iou;
    if (iou >= iou_threshold) {
      matches[g].push_back(p);
      pred_matched[p] = 1;
    }
  }

  for (int g = 1; g <= det.gt.count; ++g) {
    if (gt_excluded[g]) continue;
    LesionRow row;
    row.gt_id = g;
    row.pred_ids = matches[g];
    row.best_iou = best_iou[g];
    row.detected = !matches[g].empty();
    if (row.detected) {
      int64_t inter = 0, psize = 0;
      for (int p : row.pred_ids) {
        inter += overlap[{g, p}];
        psize += det.pred.sizes[p - 1];
      }
      row.dsc = 2.0 * static_cast<double>(inter) / static_cast<double>(psize + det.gt.sizes[g - 1]);
      ++det.tp;
    } else {
      ++det.fn;
    }
    det.rows.push_back(std::move(row));
  }
  for (int p = 1; p <= det.pred.count; ++p) {
    if (pred_matched[p]) continue;
    det.false_positives.push_back(p);
    ++det.fp;
  }
  const int denom = 2 * det.tp + det.fp + det.fn;
  det.f1 = denom == 0 ? 1.0 : 2.0 * det.tp / denom;
  return det;
}

std::optional<double> lesionwise_dsc(const Detection& detection) {
  double total = 0;
  int n = 0;
  for (const auto& row : detection.rows) {
    if (!row.detected) continue;
    total += row.dsc;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return total / n;
}

}  // namespace mois::eval
