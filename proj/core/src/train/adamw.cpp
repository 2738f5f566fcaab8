#include "mois/train/adamw.hpp"

#include <cmath>
#include <stdexcept>

namespace mois::train {

void AdamWConfig::validate() const {
  if (!(lr > 0)) throw std::invalid_argument("AdamWConfig: lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw std::invalid_argument("AdamWConfig: betas out of [0, 1)");
  if (!(eps > 0) || weight_decay < 0) throw std::invalid_argument("AdamWConfig: bad eps or weight_decay");
}

void to_json(nlohmann::json& j, const AdamWConfig& c) {
  j = {{"lr", c.lr},   {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}, {"weight_decay", c.weight_decay},
       {"clip_norm", c.clip_norm}};
}

void from_json(const nlohmann::json& j, AdamWConfig& c) {
  c = AdamWConfig{};
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.validate();
}

template <typename T>
AdamW<T>::AdamW(model::ParamStore<T>& params, AdamWConfig config) : params_(params), config_(config) {
  config_.validate();
  for (const auto& [name, p] : params_.all()) {
    m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
  }
}

template <typename T>
double AdamW<T>::step() {
  auto& all = params_.all();
  double sq = 0;
  for (const auto& [name, p] : all) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  const double clip = config_.clip_norm > 0 && norm > config_.clip_norm ? config_.clip_norm / norm : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (size_t k = 0; k < all.size(); ++k) {
    model::Tensor<T> p = all[k].second;
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    const bool decay = p.rank() >= 2 && config_.weight_decay > 0;
    for (size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]) * clip;
      m[i] = config_.beta1 * m[i] + (1 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1 - config_.beta2) * gi * gi;
      double wi = static_cast<double>(w[i]);
      if (decay) wi -= config_.lr * config_.weight_decay * wi;
      wi -= config_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.eps);
      w[i] = static_cast<T>(wi);
    }
  }
  return norm;
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace mois::train
