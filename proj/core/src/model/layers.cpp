#include "mois/model/layers.hpp"

#include <cmath>

namespace mois::model {

namespace ts = mois::tensor;

template <typename T>
Linear<T> Linear<T>::make(ParamStore<T>& ps, const std::string& name, int in, int out, std::mt19937_64& rng,
                          bool bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.w = ps.add_uniform(name + ".w", {in, out}, bound, rng);
  if (bias) l.b = ps.add_uniform(name + ".b", {out}, bound, rng);
  return l;
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  if (x.rank() == 1) return ts::reshape((*this)(ts::reshape(x, {1, x.dim(0)})), {w.dim(1)});
  Tensor<T> y = ts::matmul(x, w);
  return b.defined() ? ts::add(y, b) : y;
}

template <typename T>
Norm<T> Norm<T>::make(ParamStore<T>& ps, const std::string& name, int channels) {
  return {ps.add_constant(name + ".gamma", {channels}, T(1)), ps.add_constant(name + ".beta", {channels}, T(0))};
}

template <typename T>
Tensor<T> Norm<T>::operator()(const Tensor<T>& x) const {
  return ts::add(ts::mul(ts::layer_norm(x), gamma), beta);
}

template <typename T>
Mlp<T> Mlp<T>::make(ParamStore<T>& ps, const std::string& name, int in, int hidden, int out, std::mt19937_64& rng) {
  Mlp m;
  m.fc1 = Linear<T>::make(ps, name + ".fc1", in, hidden, rng);
  m.fc2 = Linear<T>::make(ps, name + ".fc2", hidden, out, rng);
  return m;
}

template <typename T>
Tensor<T> Mlp<T>::operator()(const Tensor<T>& x) const {
  return fc2(ts::gelu(fc1(x)));
}

template <typename T>
Conv<T> Conv<T>::make(ParamStore<T>& ps, const std::string& name, int in, int out, int kernel, int stride,
                      int padding, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel));
  Conv c;
  c.w = ps.add_uniform(name + ".w", {out, in, kernel, kernel}, bound, rng);
  c.b = ps.add_uniform(name + ".b", {out}, bound, rng);
  c.stride = stride;
  c.padding = padding;
  return c;
}

template <typename T>
Tensor<T> Conv<T>::operator()(const Tensor<T>& x) const {
  return ts::conv2d(x, w, b, {stride, padding});
}

template <typename T>
MultiHeadAttention<T> MultiHeadAttention<T>::make(ParamStore<T>& ps, const std::string& name, int channels, int heads,
                                                  std::mt19937_64& rng) {
  MultiHeadAttention a;
  a.q = Linear<T>::make(ps, name + ".q", channels, channels, rng);
  a.k = Linear<T>::make(ps, name + ".k", channels, channels, rng);
  a.v = Linear<T>::make(ps, name + ".v", channels, channels, rng);
  a.o = Linear<T>::make(ps, name + ".o", channels, channels, rng);
  a.heads = heads;
  return a;
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::operator()(const Tensor<T>& queries, const Tensor<T>& keys, const Tensor<T>& values,
                                            Positions q_pos, Positions k_pos, double rope_base) const {
  ts::AttentionOptions opt;
  opt.heads = heads;
  opt.rope = !q_pos.empty();
  opt.rope_base = rope_base;
  opt.q_positions = q_pos;
  opt.k_positions = k_pos;
  return o(ts::attention(q(queries), k(keys), v(values), opt));
}

template <typename T>
Tensor<T> tokens_to_map(const Tensor<T>& tokens, int h, int w) {
  return ts::reshape(ts::transpose(tokens), {tokens.dim(1), h, w});
}

template <typename T>
Tensor<T> map_to_tokens(const Tensor<T>& map) {
  return ts::transpose(ts::reshape(map, {map.dim(0), map.dim(1) * map.dim(2)}));
}

#define MOIS_INSTANTIATE(T)                                   \
  template struct Linear<T>;                                  \
  template struct Norm<T>;                                    \
  template struct Mlp<T>;                                     \
  template struct Conv<T>;                                    \
  template struct MultiHeadAttention<T>;                      \
  template Tensor<T> tokens_to_map(const Tensor<T>&, int, int); \
  template Tensor<T> map_to_tokens(const Tensor<T>&);

MOIS_INSTANTIATE(float)
MOIS_INSTANTIATE(double)

}  // namespace mois::model
