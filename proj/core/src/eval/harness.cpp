#include "mois/eval/harness.hpp"

#include <stdexcept>
#include <string>

#include "mois/eval/clicks.hpp"
#include "mois/eval/components.hpp"
#include "mois/eval/morphology.hpp"

namespace mois::eval {

void EvalConfig::validate() const {
  if (lesions < 1) throw std::invalid_argument("EvalConfig: lesions must be >= 1");
  if (clicks < 1) throw std::invalid_argument("EvalConfig: clicks must be >= 1");
  if (!(v_thresh >= 0)) throw std::invalid_argument("EvalConfig: v_thresh must be >= 0");
  if (!(iou_threshold > 0 && iou_threshold <= 1)) throw std::invalid_argument("EvalConfig: iou_threshold in (0,1]");
  if (!valid_connectivity(connectivity)) throw std::invalid_argument("EvalConfig: bad connectivity");
}

MetricsReport score_prediction(const Mask& pred, const Mask& gt, const Spacing& spacing, const EvalConfig& config,
                               const Mask* prompted) {
  Mask p = remove_small_components(pred, config.v_thresh, spacing, config.connectivity);
  Mask g = remove_small_components(gt, config.v_thresh, spacing, config.connectivity);
  MetricsReport r;
  r.scan_dsc = dsc(p, g);
  Detection det = lesion_f1(p, g, config.iou_threshold, config.connectivity);
  r.lesion_f1 = det.f1;
  r.lesionwise_dsc = lesionwise_dsc(det);
  r.tp = det.tp;
  r.fp = det.fp;
  r.fn = det.fn;
  r.rows = det.rows;
  r.predicted_voxels = count_foreground(p);
  if (prompted) {
    Detection un = lesion_f1(p, g, config.iou_threshold, config.connectivity, prompted);
    r.unprompted_f1 = un.f1;
    r.unprompted_tp = un.tp;
    r.unprompted_fp = un.fp;
    r.unprompted_fn = un.fn;
  } else {
    r.unprompted_f1 = det.f1;
    r.unprompted_tp = det.tp;
    r.unprompted_fp = det.fp;
    r.unprompted_fn = det.fn;
  }
  return r;
}

EvalRun run_protocol(const SessionFactory& factory, const io::Volume& volume, const Mask& gt,
                     const EvalConfig& config) {
  config.validate();
  if (!(volume.dims() == gt.dims())) {
    throw std::invalid_argument("evaluation: volume " + volume.dims().str() + " vs gt " + gt.dims().str());
  }
  EvalRun run;
  run.merged = Mask(gt.dims());
  run.prompted = Mask(gt.dims());
  Components cc = connected_components(gt, config.connectivity);
  std::vector<int> chosen = select_largest(cc, config.lesions);
  auto session = factory(volume);

  for (size_t li = 0; li < chosen.size(); ++li) {
    const int id = chosen[li];
    Mask lesion = cc.component(id);
    for (int64_t i = 0; i < lesion.size(); ++i) run.prompted[i] |= lesion[i];
    LesionTrace trace;
    trace.gt_id = id;
    trace.voxels = cc.sizes[id - 1];
    Mask current(gt.dims());
    for (int c = 0; c < config.clicks; ++c) {
      std::optional<Click> click;
      if (c == 0) {
        click = simulate_initial_click(lesion, volume.spacing);
      } else {
        click = simulate_correction_click(current, lesion, volume.spacing, config.connectivity);
        if (!click) {
          trace.converged = true;
          break;
        }
      }
      int64_t at = current.index(click->x, click->y, click->slice);
      trace.clicks.push_back(*click);
      trace.clicks_in_error.push_back((current[at] != 0) != (lesion[at] != 0));
      current = session->click(static_cast<int>(li), *click);
      if (!(current.dims() == gt.dims())) throw std::runtime_error("evaluation: session returned a mask of wrong extents");
    }
    if (!trace.converged && current == lesion) trace.converged = true;
    trace.instance_dsc = dsc(current, lesion);
    for (int64_t i = 0; i < current.size(); ++i) run.merged[i] |= current[i];
    run.lesions.push_back(std::move(trace));
  }
  if (auto extra = session->finalize()) {
    if (!(extra->dims() == gt.dims())) throw std::runtime_error("evaluation: finalize mask of wrong extents");
    for (int64_t i = 0; i < extra->size(); ++i) run.merged[i] |= (*extra)[i];
  }
  return run;
}

MetricsReport run_lesionwise_eval(const SessionFactory& factory, const io::Volume& volume, const Mask& gt,
                                  const EvalConfig& config) {
  EvalRun run = run_protocol(factory, volume, gt, config);
  MetricsReport report = score_prediction(run.merged, gt, volume.spacing, config, &run.prompted);
  report.lesions = std::move(run.lesions);
  return report;
}

namespace {

class PerfectSession : public EvalSession {
 public:
  PerfectSession(const Mask& gt, int connectivity) : cc_(connected_components(gt, connectivity)) {}
  Mask click(int, const Click& click) override {
    int label = cc_.labels(click.x, click.y, click.slice);
    if (label == 0) return Mask(cc_.labels.dims());
    return cc_.component(label);
  }

 private:
  Components cc_;
};

class EmptySession : public EvalSession {
 public:
  explicit EmptySession(Dims dims) : dims_(dims) {}
  Mask click(int, const Click&) override { return Mask(dims_); }
  std::optional<Mask> finalize() override { return Mask(dims_); }

 private:
  Dims dims_;
};

}  // namespace

SessionFactory perfect_session_factory(const Mask& gt, int connectivity) {
  return [gt, connectivity](const io::Volume&) { return std::make_unique<PerfectSession>(gt, connectivity); };
}

SessionFactory empty_session_factory() {
  return [](const io::Volume& v) { return std::make_unique<EmptySession>(v.dims()); };
}

}  // namespace mois::eval
