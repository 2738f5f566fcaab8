#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mois/eval/harness.hpp"
#include "mois/inference/session.hpp"
#include "mois/model/network.hpp"
#include "mois/train/adamw.hpp"
#include "mois/train/loss.hpp"
#include "mois/train/sample.hpp"

namespace mois::train {

struct TrainConfig {
  model::ModelConfig model;
  PhantomConfig phantom;
  AugmentConfig augment;
  AdamWConfig optimizer;
  LossWeights loss;

  int window = 4;             // D_train
  int max_prompted = 3;       // N_train
  int max_clicks = 7;         // per lesion
  int correction_rounds = 2;  // no-grad refinement rounds drawn from [0, this] per lesion
  int epochs = 30;
  int samples_per_scan = 1;
  int teacher_forcing_epochs = 1;
  double fallback_probability = 0.1;  // samples trained with an empty exemplar bank
  std::string lr_schedule = "constant";  // or "cosine"
  int warmup_steps = 0;
  uint64_t seed = 1;

  // Dataset and fold layout. With folds > 1 the training scans are split into
  // folds and fold `fold` is held out for validation; otherwise validation
  // uses separately seeded scans.
  int train_scans = 40;
  uint64_t train_seed = 1000;
  int val_scans = 4;
  uint64_t val_seed = 900000;
  int folds = 1;
  int fold = 0;

  eval::EvalConfig validation{3, 1, 1000.0, 0.1, 26};
  inference::InferenceConfig inference;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
TrainConfig load_train_config(const std::filesystem::path& path);

// Per-sample random decisions, drawn before the forward pass so the pass is a
// pure function of (parameters, sample, plan).
struct SamplePlan {
  std::vector<int> corrections;  // per prompted lesion
  bool teacher = false;          // memory and exemplars from GT masks
  bool fallback = false;         // semantic decoding with an empty bank, empty target
};

struct ForwardOptions {
  int max_clicks = 7;
  LossWeights loss;
};

// Full training forward pass for one sample, returning the composite loss.
template <typename T>
LossBreakdown<T> forward_sample(const model::Network<T>& net, const TrainingSample& sample, const SamplePlan& plan,
                                const ForwardOptions& options = {});

struct EpochLog {
  int epoch = 0;
  double total = 0, instance = 0, object = 0, semantic = 0;
  double val_scan_dsc = 0;
  double lr = 0;
};

struct StepLog {
  int64_t step = 0;
  LossBreakdown<float> loss;
  double grad_norm = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::filesystem::path checkpoint)
      : std::runtime_error(what), checkpoint_(std::move(checkpoint)) {}
  const std::filesystem::path& checkpoint() const { return checkpoint_; }

 private:
  std::filesystem::path checkpoint_;
};

struct Dataset {
  std::vector<Phantom> train;
  std::vector<Phantom> val;
};

// Deterministic phantom sets for a config (honours the fold layout).
Dataset make_dataset(const TrainConfig& config);

class Trainer {
 public:
  explicit Trainer(TrainConfig config);

  const TrainConfig& config() const { return config_; }
  model::Network<float>& network() { return *net_; }
  std::shared_ptr<model::Network<float>> shared_network() const { return net_; }
  const Dataset& dataset() const { return data_; }

  // One optimizer step on a sample. Throws TrainingDiverged (after restoring
  // the pre-step parameters and writing them to `rescue`) on a non-finite loss
  // or gradient.
  StepLog step(const TrainingSample& sample, const SamplePlan& plan);
  SamplePlan draw_plan(const TrainingSample& sample, int epoch);
  TrainingSample draw_sample(int scan);

  EpochLog run_epoch(int epoch);
  double validate_scan_dsc();

  // Trains for config.epochs, writing `model.ckpt` and `log.csv` to out_dir.
  // on_epoch, if set, sees every epoch log.
  std::vector<EpochLog> train(const std::filesystem::path& out_dir,
                              const std::function<void(const EpochLog&)>& on_epoch = {});

  void set_rescue_path(std::filesystem::path p) { rescue_ = std::move(p); }

 private:
  double lr_at(int64_t step) const;

  TrainConfig config_;
  std::shared_ptr<model::Network<float>> net_;
  std::unique_ptr<AdamW<float>> opt_;
  Dataset data_;
  std::vector<PreparedScan> prepared_;
  std::mt19937_64 rng_;
  int64_t total_steps_ = 0;
  std::filesystem::path rescue_ = "last_good.ckpt";
};

std::string epoch_csv_header();
std::string epoch_csv_row(const EpochLog& log);

// Trains one model per fold into out_dir/fold_<k>; returns each fold's logs.
std::vector<std::vector<EpochLog>> run_folds(const TrainConfig& config, const std::filesystem::path& out_dir);

}  // namespace mois::train
