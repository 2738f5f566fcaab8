#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mois/eval/harness.hpp"

namespace mois::eval {

nlohmann::json to_json(const EvalConfig& config);
nlohmann::json to_json(const MetricsReport& report);

struct ScanResult {
  std::string name;
  MetricsReport report;
};

// Full report: config echo, seed, per-scan metrics and lesion tables, and
// mean / SD / median summaries.
nlohmann::json build_report(const std::vector<ScanResult>& scans, const EvalConfig& config, uint64_t seed);

// One header line plus one row per scan.
std::string summary_csv(const std::vector<ScanResult>& scans);

double median(std::vector<double> values);

}  // namespace mois::eval
