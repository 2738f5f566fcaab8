#include "mois/model/network.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mois::model {

namespace ts = mois::tensor;

template <typename T>
ConditioningAttention<T> ConditioningAttention<T>::make(ParamStore<T>& ps, const std::string& name,
                                                        const ModelConfig& cfg, std::mt19937_64& rng) {
  ConditioningAttention m;
  const int c = cfg.channels;
  for (int i = 0; i < cfg.attention_layers; ++i) {
    const std::string p = name + ".layers." + std::to_string(i);
    Layer l;
    l.norm_self = Norm<T>::make(ps, p + ".norm_self", c);
    l.self_attn = MultiHeadAttention<T>::make(ps, p + ".self_attn", c, cfg.attention_heads, rng);
    l.norm_cross = Norm<T>::make(ps, p + ".norm_cross", c);
    l.cross_attn = MultiHeadAttention<T>::make(ps, p + ".cross_attn", c, cfg.attention_heads, rng);
    l.norm_mlp = Norm<T>::make(ps, p + ".norm_mlp", c);
    l.mlp = Mlp<T>::make(ps, p + ".mlp", c, c * cfg.mlp_ratio, c, rng);
    m.layers.push_back(std::move(l));
  }
  m.norm_out = Norm<T>::make(ps, name + ".norm_out", c);
  m.rank_embed = ps.add_uniform(name + ".rank_embed", {cfg.rank_slots(), c}, 0.02, rng);
  m.empty_token = ps.add_uniform(name + ".empty_token", {1, c}, 1.0, rng);
  return m;
}

template <typename T>
Network<T>::Network(const ModelConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const int c = config_.channels, g = config_.grid(), s4 = config_.hires_size();
  auto& ps = params_;

  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) grid_positions_.push_back({static_cast<float>(j), static_cast<float>(i)});
  {
    std::vector<Tensor<T>> rows;
    for (int i = 0; i < g; ++i)
      for (int j = 0; j < g; ++j) rows.push_back(ts::reshape(position_encoding((j + 0.5) / g, (i + 0.5) / g), {1, c}));
    dense_pe_ = ts::concat(rows, 0);
  }

  stem_ = Conv<T>::make(ps, "encoder.stem", 1, config_.stem_channels, 4, 4, 0, rng);
  int in = config_.stem_channels;
  for (int stride = 4, i = 0; stride < config_.patch_stride; stride *= 2, ++i) {
    downs_.push_back(Conv<T>::make(ps, "encoder.down." + std::to_string(i), in, c, 2, 2, 0, rng));
    in = c;
  }
  if (downs_.empty()) downs_.push_back(Conv<T>::make(ps, "encoder.down.0", in, c, 1, 1, 0, rng));
  for (int b = 0; b < config_.encoder_blocks; ++b) {
    const std::string p = "encoder.blocks." + std::to_string(b);
    EncoderBlock blk;
    blk.norm1 = Norm<T>::make(ps, p + ".norm1", c);
    blk.attn = MultiHeadAttention<T>::make(ps, p + ".attn", c, config_.encoder_heads, rng);
    blk.norm2 = Norm<T>::make(ps, p + ".norm2", c);
    blk.mlp = Mlp<T>::make(ps, p + ".mlp", c, c * config_.mlp_ratio, c, rng);
    blocks_.push_back(std::move(blk));
  }
  encoder_norm_ = Norm<T>::make(ps, "encoder.norm", c);

  label_embed_ = ps.add_uniform("prompt.label_embed", {2, c}, 1.0, rng);
  no_memory_embed_ = ps.add_uniform("prompt.no_memory_embed", {1, c}, 0.02, rng);

  output_tokens_ = ps.add_uniform("decoder.output_tokens", {3, c}, 1.0, rng);
  for (int l = 0; l < config_.decoder_layers; ++l) {
    const std::string p = "decoder.layers." + std::to_string(l);
    DecoderLayer dl;
    dl.self_attn = MultiHeadAttention<T>::make(ps, p + ".self_attn", c, config_.decoder_heads, rng);
    dl.norm1 = Norm<T>::make(ps, p + ".norm1", c);
    dl.token_to_image = MultiHeadAttention<T>::make(ps, p + ".token_to_image", c, config_.decoder_heads, rng);
    dl.norm2 = Norm<T>::make(ps, p + ".norm2", c);
    dl.mlp = Mlp<T>::make(ps, p + ".mlp", c, c * config_.mlp_ratio, c, rng);
    dl.norm3 = Norm<T>::make(ps, p + ".norm3", c);
    dl.image_to_token = MultiHeadAttention<T>::make(ps, p + ".image_to_token", c, config_.decoder_heads, rng);
    dl.norm4 = Norm<T>::make(ps, p + ".norm4", c);
    decoder_layers_.push_back(std::move(dl));
  }
  final_attn_ = MultiHeadAttention<T>::make(ps, "decoder.final_attn", c, config_.decoder_heads, rng);
  final_norm_ = Norm<T>::make(ps, "decoder.final_norm", c);
  const int cf = config_.decoder_channels;
  lowres_proj_ = Conv<T>::make(ps, "decoder.lowres_proj", c, cf, 1, 1, 0, rng);
  hires_proj_ = Conv<T>::make(ps, "decoder.hires_proj", config_.stem_channels, cf, 1, 1, 0, rng);
  hyper_ = Mlp<T>::make(ps, "decoder.hyper", c, c, cf + 1, rng);
  mask_bias_ = ps.add_constant("decoder.mask_bias", {1}, T(0));
  iou_head_ = Mlp<T>::make(ps, "decoder.iou_head", c, c, 1, rng);
  object_head_ = Linear<T>::make(ps, "decoder.object_head", c, 1, rng);
  pointer_proj_ = Linear<T>::make(ps, "decoder.pointer_proj", c, c, rng);
  (void)s4;

  mask_embed_ = Conv<T>::make(ps, "memory_encoder.mask_embed", 1, c, 1, 1, 0, rng);
  image_proj_ = Linear<T>::make(ps, "memory_encoder.image_proj", c, c, rng);
  fuse1_ = Conv<T>::make(ps, "memory_encoder.fuse1", c, c, 3, 1, 1, rng);
  fuse2_ = Conv<T>::make(ps, "memory_encoder.fuse2", c, c, 3, 1, 1, rng);

  memory_attn_ = ConditioningAttention<T>::make(ps, "memory_attention", config_, rng);
  if (!config_.shared_attention) {
    exemplar_attn_ = ConditioningAttention<T>::make(ps, "exemplar_attention", config_, rng);
    copy_memory_to_exemplar_attention();
  }
}

template <typename T>
void Network<T>::copy_memory_to_exemplar_attention() {
  if (config_.shared_attention) return;
  const std::string from = "memory_attention.", to = "exemplar_attention.";
  for (auto& [name, src] : params_.with_prefix(from)) {
    Tensor<T> dst = params_.get(to + name.substr(from.size()));
    auto s = src.data();
    auto d = dst.mutable_data();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

template <typename T>
Tensor<T> Network<T>::position_encoding(double x, double y) const {
  const int c = config_.channels, n = c / 4;
  const double max_freq = config_.hires_size();
  std::vector<T> v(c);
  for (int i = 0; i < n; ++i) {
    double f = n == 1 ? 1.0 : std::pow(max_freq, static_cast<double>(i) / (n - 1));
    double ax = 2 * std::numbers::pi * f * x, ay = 2 * std::numbers::pi * f * y;
    v[i] = static_cast<T>(std::sin(ax));
    v[n + i] = static_cast<T>(std::cos(ax));
    v[2 * n + i] = static_cast<T>(std::sin(ay));
    v[3 * n + i] = static_cast<T>(std::cos(ay));
  }
  return Tensor<T>({c}, std::move(v));
}

template <typename T>
std::optional<std::array<double, 2>> Network<T>::mask_centroid(const Tensor<T>& mask_logits) {
  const int64_t h = mask_logits.dim(0), w = mask_logits.dim(1);
  auto d = mask_logits.data();
  double sx = 0, sy = 0;
  int64_t n = 0;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      if (d[y * w + x] > T(0)) {
        sx += x + 0.5;
        sy += y + 0.5;
        ++n;
      }
  if (n == 0) return std::nullopt;
  return std::array<double, 2>{sx / n / w, sy / n / h};
}

template <typename T>
SliceEmbedding<T> Network<T>::encode_image(const Image& slice, int slice_index) const {
  const int s = config_.input_size;
  if (slice.h() != s || slice.w() != s) {
    throw std::invalid_argument("encode_image: expected " + std::to_string(s) + "x" + std::to_string(s) + " slice, got " +
                                std::to_string(slice.h()) + "x" + std::to_string(slice.w()));
  }
  std::vector<T> px(slice.values().begin(), slice.values().end());
  SliceEmbedding<T> e;
  e.slice_index = slice_index;
  e.image = Tensor<T>({1, s, s}, std::move(px));
  e.hires = ts::gelu(stem_(e.image));
  Tensor<T> x = e.hires;
  for (size_t i = 0; i < downs_.size(); ++i) {
    x = downs_[i](x);
    if (i + 1 < downs_.size()) x = ts::gelu(x);
  }
  x = map_to_tokens(x);
  for (const auto& b : blocks_) {
    Tensor<T> h = b.norm1(x);
    x = ts::add(x, b.attn(h, h, h, grid_positions_, grid_positions_, config_.rope_base));
    x = ts::add(x, b.mlp(b.norm2(x)));
  }
  e.tokens = encoder_norm_(x);
  return e;
}

template <typename T>
Tensor<T> Network<T>::unconditioned(const SliceEmbedding<T>& embedding) const {
  return ts::add(embedding.tokens, no_memory_embed_);
}

template <typename T>
DecoderOutput<T> Network<T>::decode_mask(const SliceEmbedding<T>& embedding, const Tensor<T>& conditioned,
                                         const std::vector<PromptPoint>& prompts,
                                         const std::vector<Tensor<T>>& extra) const {
  const int c = config_.channels, g = config_.grid(), s = config_.input_size, s4 = config_.hires_size();
  const int cf = config_.decoder_channels;
  if (conditioned.rank() != 2 || conditioned.dim(0) != g * g || conditioned.dim(1) != c) {
    throw ts::ShapeError("decode_mask: conditioned tokens " + ts::to_string(conditioned.shape()) + ", expected [" +
                         std::to_string(g * g) + "," + std::to_string(c) + "]");
  }
  std::vector<Tensor<T>> rows{output_tokens_};
  for (const auto& p : prompts) {
    Tensor<T> label = ts::slice(label_embed_, 0, p.positive ? 1 : 0, p.positive ? 2 : 1);
    Tensor<T> pe = ts::reshape(position_encoding((p.x + 0.5) / s, (p.y + 0.5) / s), {1, c});
    rows.push_back(ts::add(label, pe));
  }
  for (const auto& t : extra) rows.push_back(ts::reshape(t, {1, c}));
  const Tensor<T> tokens0 = rows.size() == 1 ? rows[0] : ts::concat(rows, 0);

  Tensor<T> tokens = tokens0;
  Tensor<T> img = conditioned;
  for (size_t li = 0; li < decoder_layers_.size(); ++li) {
    const auto& l = decoder_layers_[li];
    Tensor<T> q = li == 0 ? tokens : ts::add(tokens, tokens0);
    tokens = l.norm1(ts::add(tokens, l.self_attn(q, q, tokens)));
    Tensor<T> img_k = ts::add(img, dense_pe_);
    q = ts::add(tokens, tokens0);
    tokens = l.norm2(ts::add(tokens, l.token_to_image(q, img_k, img)));
    tokens = l.norm3(ts::add(tokens, l.mlp(tokens)));
    q = ts::add(tokens, tokens0);
    img = l.norm4(ts::add(img, l.image_to_token(img_k, q, tokens)));
  }
  tokens = final_norm_(ts::add(tokens, final_attn_(ts::add(tokens, tokens0), ts::add(img, dense_pe_), img)));

  DecoderOutput<T> out;
  Tensor<T> obj_tok = ts::slice(tokens, 0, 0, 1);
  Tensor<T> iou_tok = ts::slice(tokens, 0, 1, 2);
  Tensor<T> mask_tok = ts::slice(tokens, 0, 2, 3);
  out.object_score = ts::reshape(object_head_(obj_tok), {1});
  out.iou = ts::reshape(ts::sigmoid(iou_head_(iou_tok)), {1});

  Tensor<T> hyper = hyper_(mask_tok);  // [1, cf + 1]
  Tensor<T> lo = ts::upsample_bilinear(lowres_proj_(tokens_to_map(img, g, g)), s4, s4);
  Tensor<T> hi = hires_proj_(embedding.hires);
  Tensor<T> feat = ts::reshape(ts::gelu(ts::add(lo, hi)), {cf, static_cast<int64_t>(s4) * s4});
  Tensor<T> low_logits = ts::reshape(ts::matmul(ts::slice(hyper, 1, 0, cf), feat), {1, s4, s4});
  Tensor<T> up = ts::upsample_bilinear(low_logits, s, s);
  Tensor<T> intensity_gain = ts::reshape(ts::slice(hyper, 1, cf, cf + 1), {1});
  Tensor<T> logits = ts::add(ts::add(up, ts::mul(embedding.image, intensity_gain)), mask_bias_);
  out.mask_logits = ts::reshape(logits, {s, s});
  out.output_token = ts::reshape(mask_tok, {c});
  out.pointer = pointer_proj_(out.output_token);
  return out;
}

template <typename T>
Tensor<T> Network<T>::encode_memory(const Tensor<T>& mask_logits, const SliceEmbedding<T>& embedding) const {
  const int s = config_.input_size, g = config_.grid(), stride = config_.patch_stride;
  if (mask_logits.rank() != 2 || mask_logits.dim(0) != s || mask_logits.dim(1) != s) {
    throw ts::ShapeError("encode_memory: mask " + ts::to_string(mask_logits.shape()) + " does not match slice extent " +
                         std::to_string(s));
  }
  // Binarized mask, area-pooled onto the token grid. Not differentiated.
  auto m = mask_logits.data();
  std::vector<T> pooled(static_cast<size_t>(g) * g, T(0));
  const T cell = T(1) / static_cast<T>(stride * stride);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x)
      if (m[static_cast<size_t>(y) * s + x] > T(0)) pooled[(y / stride) * g + x / stride] += cell;
  Tensor<T> mask_map({1, g, g}, std::move(pooled));

  Tensor<T> x = ts::add(mask_embed_(mask_map), tokens_to_map(image_proj_(embedding.tokens), g, g));
  x = ts::add(x, fuse2_(ts::gelu(fuse1_(x))));
  return map_to_tokens(x);
}

template <typename T>
Tensor<T> Network<T>::condition(const ConditioningAttention<T>& module, const SliceEmbedding<T>& embedding,
                                const std::vector<ContextItem<T>>& items,
                                const std::vector<Tensor<T>>& key_offsets) const {
  const int slots = config_.rank_slots();
  std::vector<Tensor<T>> keys, values, pointers;
  std::vector<std::array<float, 2>> key_pos;
  if (items.empty()) {
    keys.push_back(module.empty_token);
    values.push_back(module.empty_token);
  } else {
    for (size_t r = 0; r < items.size(); ++r) {
      Tensor<T> rank = ts::slice(module.rank_embed, 0, std::min<int64_t>(r, slots - 1), std::min<int64_t>(r, slots - 1) + 1);
      Tensor<T> k = ts::add(items[r].feature, rank);
      if (r < key_offsets.size() && key_offsets[r].defined()) k = ts::add(k, key_offsets[r]);
      keys.push_back(k);
      values.push_back(items[r].feature);
      key_pos.insert(key_pos.end(), grid_positions_.begin(), grid_positions_.end());
      if (config_.use_object_pointer && items[r].pointer.defined()) {
        Tensor<T> ptr = ts::reshape(items[r].pointer, {1, config_.channels});
        Tensor<T> pk = ts::add(ptr, rank);
        if (items[r].position.defined()) pk = ts::add(pk, items[r].position);
        pointers.push_back(pk);
        pointers.push_back(ptr);
      }
    }
    for (size_t i = 0; i < pointers.size(); i += 2) {
      keys.push_back(pointers[i]);
      values.push_back(pointers[i + 1]);
    }
  }
  const Tensor<T> mem_k = keys.size() == 1 ? keys[0] : ts::concat(keys, 0);
  const Tensor<T> mem_v = values.size() == 1 ? values[0] : ts::concat(values, 0);

  Tensor<T> x = embedding.tokens;
  for (const auto& l : module.layers) {
    Tensor<T> h = l.norm_self(x);
    x = ts::add(x, l.self_attn(h, h, h, grid_positions_, grid_positions_, config_.rope_base));
    h = l.norm_cross(x);
    x = ts::add(x, l.cross_attn(h, mem_k, mem_v, grid_positions_, key_pos, config_.rope_base));
    x = ts::add(x, l.mlp(l.norm_mlp(x)));
  }
  return module.norm_out(x);
}

template <typename T>
Tensor<T> Network<T>::memory_attend(const SliceEmbedding<T>& embedding, const std::vector<ContextItem<T>>& items) const {
  if (items.empty()) throw std::invalid_argument("memory_attend: empty memory; decode from prompts or skip the slice");
  return condition(memory_attn_, embedding, items, {});
}

template <typename T>
Tensor<T> Network<T>::exemplar_attend(const SliceEmbedding<T>& embedding,
                                      const std::vector<Exemplar<T>>& exemplars) const {
  std::vector<ContextItem<T>> items;
  std::vector<Tensor<T>> offsets;
  const int c = config_.channels;
  for (const auto& e : exemplars) {
    items.push_back({e.z, e.v, e.p, e.d});
    if (config_.exemplar_slice_encoding) {
      // Sinusoidal code of the signed slice distance, added to every key of the exemplar.
      std::vector<T> code(c);
      const double delta = e.d - embedding.slice_index;
      for (int i = 0; i < c / 2; ++i) {
        double f = std::pow(config_.rope_base, -2.0 * i / c);
        code[2 * i] = static_cast<T>(std::sin(delta * f));
        code[2 * i + 1] = static_cast<T>(std::cos(delta * f));
      }
      offsets.push_back(Tensor<T>({1, c}, std::move(code)));
    }
  }
  return condition(exemplar_attention(), embedding, items, offsets);
}

template <typename T>
std::optional<Exemplar<T>> Network<T>::make_exemplar(const Tensor<T>& mask_logits, const Tensor<T>& pointer,
                                                     const SliceEmbedding<T>& embedding, bool prompted) const {
  auto centroid = mask_centroid(mask_logits);
  if (!centroid) return std::nullopt;
  Exemplar<T> e;
  e.z = encode_memory(mask_logits, embedding);
  e.p = position_encoding((*centroid)[0], (*centroid)[1]);
  e.d = embedding.slice_index;
  e.prompted = prompted;
  e.v = pointer;
  return e;
}

template <typename T>
std::optional<Exemplar<T>> Network<T>::make_exemplar(const DecoderOutput<T>& decoded, const SliceEmbedding<T>& embedding,
                                                     bool prompted) const {
  return make_exemplar(decoded.mask_logits, decoded.pointer, embedding, prompted);
}

template struct ConditioningAttention<float>;
template struct ConditioningAttention<double>;
template class Network<float>;
template class Network<double>;

}  // namespace mois::model
