#pragma once

#include <json.hpp>

#include "mois/model/params.hpp"

namespace mois::train {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // decoupled; applied to rank >= 2 parameters only
  double clip_norm = 1.0;      // global gradient norm clip; <= 0 disables

  void validate() const;
};

void to_json(nlohmann::json& j, const AdamWConfig& c);
void from_json(const nlohmann::json& j, AdamWConfig& c);

template <typename T>
class AdamW {
 public:
  AdamW(model::ParamStore<T>& params, AdamWConfig config);

  // Applies one update from the accumulated gradients. Parameters without a
  // gradient are left unchanged. Returns the pre-clip global gradient norm.
  double step();
  int64_t steps() const { return t_; }
  const AdamWConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

 private:
  model::ParamStore<T>& params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace mois::train
