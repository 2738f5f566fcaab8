#pragma once

// Lesion-wise interactive evaluation: the largest GT lesions are refined one
// at a time by simulated clicks, their instance masks are merged, small
// components are dropped from prediction and GT, and the metrics computed.

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "mois/click.hpp"
#include "mois/eval/metrics.hpp"
#include "mois/io/volume.hpp"

namespace mois::eval {

struct EvalConfig {
  int lesions = 20;             // L_chosen
  int clicks = 3;               // C_chosen
  double v_thresh = 1000.0;     // mm^3
  double iou_threshold = 0.1;
  int connectivity = 26;

  void validate() const;
};

// Model side of the protocol. One instance per scan.
class EvalSession {
 public:
  virtual ~EvalSession() = default;
  // Adds a click to lesion `lesion` (0-based, in selection order) and returns
  // that lesion's current scan-level instance mask.
  virtual Mask click(int lesion, const Click& click) = 0;
  // Extra scan-level mask merged into the prediction once all lesions are
  // done (exemplar propagation); nullopt for instance-only models.
  virtual std::optional<Mask> finalize() { return std::nullopt; }
};

using SessionFactory = std::function<std::unique_ptr<EvalSession>(const io::Volume&)>;

struct LesionTrace {
  int gt_id = 0;
  int64_t voxels = 0;
  std::vector<Click> clicks;
  // Whether each click fell inside the error region (pred XOR gt) at issue time.
  std::vector<bool> clicks_in_error;
  bool converged = false;
  double instance_dsc = 0.0;
};

struct MetricsReport {
  double scan_dsc = 0.0;
  double lesion_f1 = 0.0;
  std::optional<double> lesionwise_dsc;
  int tp = 0, fp = 0, fn = 0;
  std::vector<LesionRow> rows;
  // Detection restricted to GT lesions that received no clicks.
  double unprompted_f1 = 1.0;
  int unprompted_tp = 0, unprompted_fp = 0, unprompted_fn = 0;
  std::vector<LesionTrace> lesions;
  int64_t predicted_voxels = 0;
};

// Metrics for a finished prediction. `prompted` marks GT lesions excluded
// from the unprompted detection score.
MetricsReport score_prediction(const Mask& pred, const Mask& gt, const Spacing& spacing, const EvalConfig& config,
                               const Mask* prompted = nullptr);

MetricsReport run_lesionwise_eval(const SessionFactory& factory, const io::Volume& volume, const Mask& gt,
                                  const EvalConfig& config);

// Merged prediction before small-component removal, as produced by the
// protocol; exposed for tests and the CLI.
struct EvalRun {
  Mask merged;
  Mask prompted;
  std::vector<LesionTrace> lesions;
};
EvalRun run_protocol(const SessionFactory& factory, const io::Volume& volume, const Mask& gt,
                     const EvalConfig& config);

// Reference stubs.
SessionFactory perfect_session_factory(const Mask& gt, int connectivity = 26);
SessionFactory empty_session_factory();

}  // namespace mois::eval
