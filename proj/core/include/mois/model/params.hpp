#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "mois/tensor/tensor.hpp"

namespace mois::model {

using tensor::Shape;
using tensor::Tensor;

// Named trainable leaves in registration order.
template <typename T>
class ParamStore {
 public:
  Tensor<T> add_uniform(const std::string& name, Shape shape, double bound, std::mt19937_64& rng);
  Tensor<T> add_constant(const std::string& name, Shape shape, T value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor<T>& get(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor<T>>>& all() const { return params_; }
  size_t size() const { return params_.size(); }
  int64_t scalar_count() const;

  // Names starting with prefix, in registration order.
  std::vector<std::pair<std::string, Tensor<T>>> with_prefix(const std::string& prefix) const;
  void zero_grad();

 private:
  Tensor<T> add(const std::string& name, Tensor<T> t);

  std::vector<std::pair<std::string, Tensor<T>>> params_;
  std::map<std::string, size_t> index_;
};

}  // namespace mois::model
