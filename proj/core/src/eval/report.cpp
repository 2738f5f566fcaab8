#include "mois/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mois::eval {

using nlohmann::json;

json to_json(const EvalConfig& c) {
  return {{"lesions", c.lesions},
          {"clicks", c.clicks},
          {"v_thresh_mm3", c.v_thresh},
          {"iou_threshold", c.iou_threshold},
          {"connectivity", c.connectivity}};
}

json to_json(const MetricsReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"gt_id", row.gt_id},
                    {"pred_ids", row.pred_ids},
                    {"iou", row.best_iou},
                    {"detected", row.detected},
                    {"dsc", row.detected ? json(row.dsc) : json(nullptr)}});
  }
  json lesions = json::array();
  for (const auto& t : r.lesions) {
    json clicks = json::array();
    for (const auto& c : t.clicks) clicks.push_back({{"x", c.x}, {"y", c.y}, {"slice", c.slice}, {"label", c.positive ? 1 : 0}});
    lesions.push_back({{"gt_id", t.gt_id},
                       {"voxels", t.voxels},
                       {"clicks", clicks},
                       {"converged", t.converged},
                       {"instance_dsc", t.instance_dsc}});
  }
  return {{"scan_dsc", r.scan_dsc},
          {"lesion_f1", r.lesion_f1},
          {"lesionwise_dsc", r.lesionwise_dsc ? json(*r.lesionwise_dsc) : json(nullptr)},
          {"tp", r.tp},
          {"fp", r.fp},
          {"fn", r.fn},
          {"unprompted_f1", r.unprompted_f1},
          {"predicted_voxels", r.predicted_voxels},
          {"lesion_table", rows},
          {"interactions", lesions}};
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty sample");
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

json summarize(const std::vector<double>& v) {
  if (v.empty()) return {{"n", 0}};
  double mean = 0;
  for (double x : v) mean += x;
  mean /= v.size();
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  double sd = v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0;
  return {{"n", v.size()}, {"mean", mean}, {"sd", sd}, {"median", median(v)}};
}

}  // namespace

json build_report(const std::vector<ScanResult>& scans, const EvalConfig& config, uint64_t seed) {
  json per_scan = json::array();
  std::vector<double> dscs, f1s, lw;
  for (const auto& s : scans) {
    json j = to_json(s.report);
    j["name"] = s.name;
    per_scan.push_back(std::move(j));
    dscs.push_back(s.report.scan_dsc);
    f1s.push_back(s.report.lesion_f1);
    if (s.report.lesionwise_dsc) lw.push_back(*s.report.lesionwise_dsc);
  }
  return {{"config", to_json(config)},
          {"seed", seed},
          {"scans", per_scan},
          {"summary", {{"scan_dsc", summarize(dscs)}, {"lesion_f1", summarize(f1s)}, {"lesionwise_dsc", summarize(lw)}}}};
}

std::string summary_csv(const std::vector<ScanResult>& scans) {
  std::ostringstream out;
  out << "scan,scan_dsc,lesion_f1,lesionwise_dsc,tp,fp,fn,unprompted_f1\n";
  out.precision(17);
  for (const auto& s : scans) {
    const auto& r = s.report;
    out << s.name << ',' << r.scan_dsc << ',' << r.lesion_f1 << ',';
    if (r.lesionwise_dsc) out << *r.lesionwise_dsc;
    out << ',' << r.tp << ',' << r.fp << ',' << r.fn << ',' << r.unprompted_f1 << '\n';
  }
  return out.str();
}

}  // namespace mois::eval
