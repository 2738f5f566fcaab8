#pragma once

#include <array>
#include <span>
#include <string>

#include "mois/model/params.hpp"

namespace mois::model {

template <typename T>
struct Linear {
  Tensor<T> w;  // [in, out]
  Tensor<T> b;  // [out], may be undefined

  static Linear make(ParamStore<T>& ps, const std::string& name, int in, int out, std::mt19937_64& rng,
                     bool bias = true);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct Norm {
  Tensor<T> gamma, beta;  // [C]

  static Norm make(ParamStore<T>& ps, const std::string& name, int channels);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct Mlp {
  Linear<T> fc1, fc2;

  static Mlp make(ParamStore<T>& ps, const std::string& name, int in, int hidden, int out, std::mt19937_64& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct Conv {
  Tensor<T> w;  // [O, C, k, k]
  Tensor<T> b;  // [O]
  int stride = 1;
  int padding = 0;

  static Conv make(ParamStore<T>& ps, const std::string& name, int in, int out, int kernel, int stride, int padding,
                   std::mt19937_64& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

using Positions = std::span<const std::array<float, 2>>;

template <typename T>
struct MultiHeadAttention {
  Linear<T> q, k, v, o;
  int heads = 1;

  static MultiHeadAttention make(ParamStore<T>& ps, const std::string& name, int channels, int heads,
                                 std::mt19937_64& rng);
  // Rotary encoding is applied when q_pos is non-empty; keys beyond
  // k_pos.size() stay unrotated.
  Tensor<T> operator()(const Tensor<T>& queries, const Tensor<T>& keys, const Tensor<T>& values, Positions q_pos = {},
                       Positions k_pos = {}, double rope_base = 10000.0) const;
};

// Token-major [N, C] <-> channel-major [C, h, w].
template <typename T>
Tensor<T> tokens_to_map(const Tensor<T>& tokens, int h, int w);
template <typename T>
Tensor<T> map_to_tokens(const Tensor<T>& map);

}  // namespace mois::model
