#include "mois/model/params.hpp"

#include <stdexcept>

namespace mois::model {

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& name, Tensor<T> t) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
  index_[name] = params_.size();
  params_.emplace_back(name, t);
  return t;
}

template <typename T>
Tensor<T> ParamStore<T>::add_uniform(const std::string& name, Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<T> values(static_cast<size_t>(tensor::numel(shape)));
  for (auto& v : values) v = static_cast<T>(u(rng));
  return add(name, Tensor<T>(std::move(shape), std::move(values), true));
}

template <typename T>
Tensor<T> ParamStore<T>::add_constant(const std::string& name, Shape shape, T value) {
  return add(name, Tensor<T>::full(std::move(shape), value, true));
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return params_[it->second].second;
}

template <typename T>
int64_t ParamStore<T>::scalar_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> ParamStore<T>::with_prefix(const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  for (const auto& p : params_)
    if (p.first.compare(0, prefix.size(), prefix) == 0) out.push_back(p);
  return out;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace mois::model
