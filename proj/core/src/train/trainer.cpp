#include "mois/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mois/banks/banks.hpp"
#include "mois/eval/report.hpp"
#include "mois/model/serialize.hpp"
#include "mois/train/clicks.hpp"

namespace mois::train {

namespace ts = mois::tensor;
using nlohmann::json;

// ---- config ------------------------------------------------------------------

void TrainConfig::validate() const {
  model.validate();
  phantom.validate();
  augment.validate();
  optimizer.validate();
  validation.validate();
  inference.validate();
  auto positive = [](int v, const char* what) {
    if (v < 1) throw std::invalid_argument(std::string("TrainConfig: ") + what + " must be >= 1");
  };
  positive(window, "window");
  positive(max_prompted, "max_prompted");
  positive(max_clicks, "max_clicks");
  positive(epochs, "epochs");
  positive(samples_per_scan, "samples_per_scan");
  positive(train_scans, "train_scans");
  positive(folds, "folds");
  if (window > phantom.dims.d) throw std::invalid_argument("TrainConfig: window larger than scan depth");
  if (correction_rounds < 0 || correction_rounds >= max_clicks) {
    throw std::invalid_argument("TrainConfig: correction_rounds must lie in [0, max_clicks)");
  }
  if (fallback_probability < 0 || fallback_probability > 1) throw std::invalid_argument("TrainConfig: bad fallback_probability");
  if (lr_schedule != "constant" && lr_schedule != "cosine") throw std::invalid_argument("TrainConfig: unknown lr_schedule");
  if (fold < 0 || fold >= folds) throw std::invalid_argument("TrainConfig: fold out of range");
  if (folds > 1 && train_scans < folds) throw std::invalid_argument("TrainConfig: fewer scans than folds");
  if (folds == 1 && val_scans < 0) throw std::invalid_argument("TrainConfig: negative val_scans");
  if (warmup_steps < 0 || teacher_forcing_epochs < 0) throw std::invalid_argument("TrainConfig: negative schedule value");
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"model", c.model},
       {"phantom", c.phantom},
       {"augment", c.augment},
       {"optimizer", c.optimizer},
       {"loss", c.loss},
       {"window", c.window},
       {"max_prompted", c.max_prompted},
       {"max_clicks", c.max_clicks},
       {"correction_rounds", c.correction_rounds},
       {"epochs", c.epochs},
       {"samples_per_scan", c.samples_per_scan},
       {"teacher_forcing_epochs", c.teacher_forcing_epochs},
       {"fallback_probability", c.fallback_probability},
       {"lr_schedule", c.lr_schedule},
       {"warmup_steps", c.warmup_steps},
       {"seed", c.seed},
       {"train_scans", c.train_scans},
       {"train_seed", c.train_seed},
       {"val_scans", c.val_scans},
       {"val_seed", c.val_seed},
       {"folds", c.folds},
       {"fold", c.fold},
       {"validation", eval::to_json(c.validation)},
       {"inference", c.inference}};
}

void from_json(const json& j, TrainConfig& c) {
  c = TrainConfig{};
  if (j.contains("model")) c.model = j["model"].get<model::ModelConfig>();
  if (j.contains("phantom")) c.phantom = j["phantom"].get<PhantomConfig>();
  if (j.contains("augment")) c.augment = j["augment"].get<AugmentConfig>();
  if (j.contains("optimizer")) c.optimizer = j["optimizer"].get<AdamWConfig>();
  if (j.contains("loss")) c.loss = j["loss"].get<LossWeights>();
  c.window = j.value("window", c.window);
  c.max_prompted = j.value("max_prompted", c.max_prompted);
  c.max_clicks = j.value("max_clicks", c.max_clicks);
  c.correction_rounds = j.value("correction_rounds", c.correction_rounds);
  c.epochs = j.value("epochs", c.epochs);
  c.samples_per_scan = j.value("samples_per_scan", c.samples_per_scan);
  c.teacher_forcing_epochs = j.value("teacher_forcing_epochs", c.teacher_forcing_epochs);
  c.fallback_probability = j.value("fallback_probability", c.fallback_probability);
  c.lr_schedule = j.value("lr_schedule", c.lr_schedule);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.seed = j.value("seed", c.seed);
  c.train_scans = j.value("train_scans", c.train_scans);
  c.train_seed = j.value("train_seed", c.train_seed);
  c.val_scans = j.value("val_scans", c.val_scans);
  c.val_seed = j.value("val_seed", c.val_seed);
  c.folds = j.value("folds", c.folds);
  c.fold = j.value("fold", c.fold);
  if (j.contains("validation")) {
    const auto& v = j["validation"];
    c.validation.lesions = v.value("lesions", c.validation.lesions);
    c.validation.clicks = v.value("clicks", c.validation.clicks);
    c.validation.v_thresh = v.value("v_thresh", c.validation.v_thresh);
    c.validation.iou_threshold = v.value("iou_threshold", c.validation.iou_threshold);
    c.validation.connectivity = v.value("connectivity", c.validation.connectivity);
  }
  if (j.contains("inference")) c.inference = j["inference"].get<inference::InferenceConfig>();
  c.validate();
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open training config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("training config " + path.string() + ": " + e.what());
  }
  return j.get<TrainConfig>();
}

// ---- forward pass --------------------------------------------------------------

namespace {

template <typename T>
Tensor<T> mask_tensor(const SliceMask& m, T on, T off) {
  std::vector<T> v(m.size());
  for (int64_t i = 0; i < m.size(); ++i) v[i] = m[i] ? on : off;
  return Tensor<T>({m.h(), m.w()}, std::move(v));
}

template <typename T>
SliceMask binarize(const Tensor<T>& logits) {
  const int s = static_cast<int>(logits.dim(0));
  SliceMask m(s, s);
  auto d = logits.data();
  for (int64_t i = 0; i < m.size(); ++i) m[i] = d[i] > T(0);
  return m;
}

template <typename T>
struct Memory {
  Tensor<T> feature;
  Tensor<T> pointer;
};

}  // namespace

template <typename T>
LossBreakdown<T> forward_sample(const model::Network<T>& net, const TrainingSample& sample, const SamplePlan& plan,
                                const ForwardOptions& options) {
  const auto& cfg = net.config();
  const int depth = static_cast<int>(sample.slices.size());
  if (plan.corrections.size() != sample.prompted.size()) throw std::invalid_argument("forward_sample: plan/sample mismatch");

  std::vector<model::SliceEmbedding<T>> emb;
  for (int i = 0; i < depth; ++i) emb.push_back(net.encode_image(sample.slices[i], i));

  std::vector<InstancePrediction<T>> inst;
  std::vector<SemanticPrediction<T>> sem;
  banks::ExemplarBank<model::Exemplar<T>> bank(cfg.exemplar_capacity);

  for (size_t k = 0; k < sample.prompted.size(); ++k) {
    const int lesion = sample.prompted[k];
    const auto& gt = sample.instance[k];
    int p = 0;
    int64_t best = -1;
    for (int i = 0; i < depth; ++i) {
      const int64_t a = count_foreground(gt[i]);
      if (a > best) best = a, p = i;
    }

    // Clicks: initial at the region centre, then corrections from no-grad predictions.
    std::vector<model::PromptPoint> prompts;
    SliceMask pred(gt[p].h(), gt[p].w());
    for (int step = 0; step <= plan.corrections[k]; ++step) {
      if (step > 0) {
        ts::NoGradGuard guard;
        pred = binarize(net.decode_mask(emb[p], net.unconditioned(emb[p]), prompts).mask_logits);
      }
      auto c = simulate_training_click(gt[p], pred, step, p, {}, options.max_clicks);
      if (!c) break;
      prompts.push_back({static_cast<float>(c->x), static_cast<float>(c->y), c->positive});
    }
    auto out = net.decode_mask(emb[p], net.unconditioned(emb[p]), prompts);
    inst.push_back({out.mask_logits, out.iou, out.object_score, mask_tensor<T>(gt[p], 1, 0), true});

    Tensor<T> mem_logits = plan.teacher ? mask_tensor<T>(gt[p], 1, -1) : out.mask_logits;
    banks::MemoryBank<Memory<T>> memory(cfg.memory_capacity);
    memory.push(p, true, {net.encode_memory(mem_logits, emb[p]), out.pointer});
    if (auto ex = net.make_exemplar(mem_logits, out.pointer, emb[p], true)) bank.insert(lesion, p, true, std::move(*ex));

    for (int dir : {+1, -1}) {
      memory.clear_unpinned();
      for (int d = p + dir; d >= 0 && d < depth; d += dir) {
        std::vector<model::ContextItem<T>> items;
        const auto& entries = memory.entries();
        for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
          items.push_back({it->payload.feature, it->payload.pointer, {}, it->slice});
        }
        auto o = net.decode_mask(emb[d], net.memory_attend(emb[d], items), {});
        const bool visible = count_foreground(gt[d]) > 0;
        inst.push_back({o.mask_logits, o.iou, o.object_score, mask_tensor<T>(gt[d], 1, 0), visible});
        Tensor<T> m;
        if (plan.teacher) {
          m = mask_tensor<T>(gt[d], 1, -1);
        } else {
          m = o.object_score.item() > T(0) ? o.mask_logits : Tensor<T>::full(o.mask_logits.shape(), T(-1));
        }
        memory.push(d, false, {net.encode_memory(m, emb[d]), o.pointer});
        if (auto ex = net.make_exemplar(m, o.pointer, emb[d], false)) bank.insert(lesion, d, false, std::move(*ex));
      }
    }
  }

  for (int d = 0; d < depth; ++d) {
    std::vector<model::Exemplar<T>> ctx;
    if (!plan.fallback) {
      for (const auto* e : bank.select_context(d, bank.capacity())) {
        ctx.push_back(e->payload);
        ctx.back().prompted = e->prompted;
      }
    }
    auto o = net.decode_mask(emb[d], net.exemplar_attend(emb[d], ctx), {});
    const SliceMask empty(sample.semantic[d].h(), sample.semantic[d].w());
    sem.push_back({o.mask_logits, mask_tensor<T>(plan.fallback ? empty : sample.semantic[d], 1, 0)});
  }
  return composite_loss(inst, sem, options.loss);
}

template LossBreakdown<float> forward_sample(const model::Network<float>&, const TrainingSample&, const SamplePlan&,
                                             const ForwardOptions&);
template LossBreakdown<double> forward_sample(const model::Network<double>&, const TrainingSample&, const SamplePlan&,
                                              const ForwardOptions&);

// ---- dataset -----------------------------------------------------------------------

Dataset make_dataset(const TrainConfig& config) {
  Dataset d;
  std::vector<Phantom> all;
  for (int i = 0; i < config.train_scans; ++i) all.push_back(generate_phantom(config.phantom, config.train_seed + i));
  if (config.folds > 1) {
    for (int i = 0; i < config.train_scans; ++i) {
      (i % config.folds == config.fold ? d.val : d.train).push_back(std::move(all[i]));
    }
  } else {
    d.train = std::move(all);
    for (int i = 0; i < config.val_scans; ++i) d.val.push_back(generate_phantom(config.phantom, config.val_seed + i));
  }
  return d;
}

// ---- trainer ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig config) : config_(std::move(config)), rng_(config_.seed) {
  config_.validate();
  net_ = std::make_shared<model::Network<float>>(config_.model);
  opt_ = std::make_unique<AdamW<float>>(net_->params(), config_.optimizer);
  data_ = make_dataset(config_);
  for (const auto& ph : data_.train) prepared_.push_back(prepare_scan(ph, config_.inference.p_low, config_.inference.p_high));
}

TrainingSample Trainer::draw_sample(int scan) {
  SampleConfig sc{config_.window, config_.max_prompted, config_.model.input_size, 4};
  return make_sample(prepared_.at(scan), sc, config_.augment, rng_);
}

SamplePlan Trainer::draw_plan(const TrainingSample& sample, int epoch) {
  SamplePlan plan;
  std::uniform_int_distribution<int> rounds(0, config_.correction_rounds);
  for (size_t k = 0; k < sample.prompted.size(); ++k) plan.corrections.push_back(rounds(rng_));
  plan.teacher = epoch < config_.teacher_forcing_epochs;
  plan.fallback = std::bernoulli_distribution(config_.fallback_probability)(rng_);
  return plan;
}

double Trainer::lr_at(int64_t step) const {
  const double base = config_.optimizer.lr;
  if (config_.warmup_steps > 0 && step < config_.warmup_steps) return base * (step + 1) / config_.warmup_steps;
  if (config_.lr_schedule == "cosine") {
    const double total = static_cast<double>(config_.epochs) * config_.train_scans * config_.samples_per_scan;
    const double t = std::min(1.0, static_cast<double>(step) / std::max(1.0, total));
    return base * (0.1 + 0.9 * 0.5 * (1 + std::cos(std::numbers::pi * t)));
  }
  return base;
}

StepLog Trainer::step(const TrainingSample& sample, const SamplePlan& plan) {
  auto& params = net_->params();
  std::vector<std::vector<float>> saved;
  for (const auto& [name, p] : params.all()) saved.emplace_back(p.data().begin(), p.data().end());

  params.zero_grad();
  StepLog log;
  log.step = total_steps_;
  log.loss = forward_sample(*net_, sample, plan, {config_.max_clicks, config_.loss});
  bool finite = std::isfinite(log.loss.total_value);
  if (finite) {
    ts::backward(log.loss.total);
    for (const auto& [name, p] : params.all()) {
      if (!p.has_grad()) continue;
      for (float g : p.grad())
        if (!std::isfinite(g)) finite = false;
    }
  }
  if (finite) {
    opt_->set_lr(lr_at(total_steps_));
    log.grad_norm = opt_->step();
    for (const auto& [name, p] : params.all())
      for (float v : p.data())
        if (!std::isfinite(v)) finite = false;
  }
  if (!finite) {
    size_t k = 0;
    for (const auto& [name, p] : params.all()) {
      model::Tensor<float> t = p;
      std::copy(saved[k].begin(), saved[k].end(), t.mutable_data().begin());
      ++k;
    }
    model::save_model(*net_, rescue_, {{"step", total_steps_}, {"reason", "diverged"}});
    throw TrainingDiverged("training diverged at step " + std::to_string(total_steps_) +
                               "; last good parameters written to " + rescue_.string(),
                           rescue_);
  }
  ++total_steps_;
  return log;
}

double Trainer::validate_scan_dsc() {
  if (data_.val.empty()) return 0.0;
  auto factory = inference::session_factory(net_, config_.inference);
  double sum = 0;
  for (const auto& ph : data_.val) {
    sum += eval::run_lesionwise_eval(factory, ph.volume, ph.lesion_mask(), config_.validation).scan_dsc;
  }
  return sum / static_cast<double>(data_.val.size());
}

EpochLog Trainer::run_epoch(int epoch) {
  std::vector<int> order;
  for (int r = 0; r < config_.samples_per_scan; ++r)
    for (int i = 0; i < static_cast<int>(prepared_.size()); ++i) order.push_back(i);
  std::shuffle(order.begin(), order.end(), rng_);
  EpochLog log;
  log.epoch = epoch;
  for (int scan : order) {
    TrainingSample s = draw_sample(scan);
    SamplePlan plan = draw_plan(s, epoch);
    StepLog st = step(s, plan);
    log.total += st.loss.total_value;
    log.instance += st.loss.instance;
    log.object += st.loss.object;
    log.semantic += st.loss.semantic;
  }
  const double n = static_cast<double>(std::max<size_t>(order.size(), 1));
  log.total /= n;
  log.instance /= n;
  log.object /= n;
  log.semantic /= n;
  log.lr = opt_->config().lr;
  log.val_scan_dsc = validate_scan_dsc();
  return log;
}

std::string epoch_csv_header() { return "epoch,total,instance,object,semantic,val_scan_dsc,lr"; }

std::string epoch_csv_row(const EpochLog& l) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.6g", l.epoch, l.total, l.instance, l.object, l.semantic,
                l.val_scan_dsc, l.lr);
  return buf;
}

std::vector<EpochLog> Trainer::train(const std::filesystem::path& out_dir,
                                     const std::function<void(const EpochLog&)>& on_epoch) {
  std::filesystem::create_directories(out_dir);
  rescue_ = out_dir / "last_good.ckpt";
  std::ofstream csv(out_dir / "log.csv");
  if (!csv) throw std::runtime_error("cannot write " + (out_dir / "log.csv").string());
  csv << epoch_csv_header() << "\n";
  {
    std::ofstream cfg(out_dir / "config.json");
    cfg << json(config_).dump(2) << "\n";
  }
  std::vector<EpochLog> logs;
  for (int e = 0; e < config_.epochs; ++e) {
    logs.push_back(run_epoch(e));
    csv << epoch_csv_row(logs.back()) << "\n" << std::flush;
    if (on_epoch) on_epoch(logs.back());
    model::save_model(*net_, out_dir / "model.ckpt", {{"epoch", e + 1}, {"train", json(config_)}});
  }
  return logs;
}

std::vector<std::vector<EpochLog>> run_folds(const TrainConfig& config, const std::filesystem::path& out_dir) {
  std::vector<std::vector<EpochLog>> out;
  for (int f = 0; f < config.folds; ++f) {
    TrainConfig c = config;
    c.fold = f;
    Trainer t(c);
    out.push_back(t.train(out_dir / ("fold_" + std::to_string(f))));
  }
  return out;
}

}  // namespace mois::train
