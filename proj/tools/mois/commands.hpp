#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace mois::cli {

struct PhantomGenOptions {
  std::string out_dir;
  int count = 10;
  uint64_t seed = 777000;
  std::string config;  // phantom config JSON; defaults otherwise
  std::string model;   // written into the manifest when set
};

struct TrainOptions {
  std::string config;
  std::string out_dir;
  std::optional<int> epochs;
  std::optional<uint64_t> seed;
  std::optional<int> fold;  // train only this fold
};

struct EvalOptions {
  std::string manifest;
  std::string report = "report.json";
  std::string csv;
  std::string model;  // overrides per-scan model paths
  int lesions = 20;
  int clicks = 3;
  double v_thresh = 1000.0;
  double iou_threshold = 0.1;
  int connectivity = 26;
  bool stage1_only = false;
  int context_limit = -1;
  uint64_t seed = 0;  // echoed in the report
};

struct InferOptions {
  std::string model;
  std::string volume;
  std::string clicks;
  std::string out;
  std::string semantic_out;
  bool stage1_only = false;
};

struct ServeOptions {
  std::string config;
  std::optional<std::string> host;
  std::optional<int> port;
  std::optional<std::string> model;
  std::optional<std::string> snapshot_dir;
};

int phantom_gen(const PhantomGenOptions& o);
int train(const TrainOptions& o);
int eval(const EvalOptions& o);
int infer(const InferOptions& o);
int serve(const ServeOptions& o);
// Prints the default config of kind train|phantom|model|service|inference.
int defaults(const std::string& kind);

}  // namespace mois::cli
