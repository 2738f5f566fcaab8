#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "mois/io/grid.hpp"
#include "mois/model/config.hpp"
#include "mois/model/layers.hpp"

namespace mois::model {

template <typename T>
struct SliceEmbedding {
  Tensor<T> tokens;  // [G*G, C]
  Tensor<T> hires;   // [stem_channels, S/4, S/4]
  Tensor<T> image;   // [1, S, S]
  int slice_index = 0;
};

// Click in encoder-input pixel coordinates.
struct PromptPoint {
  float x = 0;
  float y = 0;
  bool positive = true;
};

template <typename T>
struct DecoderOutput {
  Tensor<T> mask_logits;   // [S, S]
  Tensor<T> iou;           // [1], in [0, 1]
  Tensor<T> object_score;  // [1], logit
  Tensor<T> output_token;  // [C]
  Tensor<T> pointer;       // [C], object pointer
};

// A memory entry or exemplar as seen by the conditioning attention.
template <typename T>
struct ContextItem {
  Tensor<T> feature;   // [G*G, C]
  Tensor<T> pointer;   // [C] or undefined
  Tensor<T> position;  // [C] additive encoding on the pointer token, or undefined
  int slice = 0;
};

template <typename T>
struct Exemplar {
  Tensor<T> z;  // visual embedding [G*G, C]
  Tensor<T> p;  // centroid encoding [C]
  int d = 0;    // slice index
  bool prompted = false;
  Tensor<T> v;  // object pointer [C]
};

// Cross-attention stack used for memory and exemplar conditioning.
template <typename T>
struct ConditioningAttention {
  struct Layer {
    Norm<T> norm_self, norm_cross, norm_mlp;
    MultiHeadAttention<T> self_attn, cross_attn;
    Mlp<T> mlp;
  };
  std::vector<Layer> layers;
  Norm<T> norm_out;
  Tensor<T> rank_embed;   // [rank_slots, C]: by recency (memory) or context order (exemplars)
  Tensor<T> empty_token;  // [1, C]: attended when there is no context

  static ConditioningAttention make(ParamStore<T>& ps, const std::string& name, const ModelConfig& cfg,
                                    std::mt19937_64& rng);
};

template <typename T>
class Network {
 public:
  explicit Network(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  // slice must be input_size x input_size.
  SliceEmbedding<T> encode_image(const Image& slice, int slice_index) const;

  // Decodes a mask from (possibly conditioned) image tokens. Prompt clicks and
  // extra tokens (object pointers) are optional.
  DecoderOutput<T> decode_mask(const SliceEmbedding<T>& embedding, const Tensor<T>& conditioned,
                               const std::vector<PromptPoint>& prompts, const std::vector<Tensor<T>>& extra = {}) const;

  // Tokens for prompt-only decoding (no memory available).
  Tensor<T> unconditioned(const SliceEmbedding<T>& embedding) const;

  // Memory feature from a slice-resolution mask (binarized at logit 0).
  Tensor<T> encode_memory(const Tensor<T>& mask_logits, const SliceEmbedding<T>& embedding) const;

  // items ordered most recent first.
  Tensor<T> memory_attend(const SliceEmbedding<T>& embedding, const std::vector<ContextItem<T>>& items) const;

  // items in context order (closest first); empty -> no-exemplar token.
  Tensor<T> exemplar_attend(const SliceEmbedding<T>& embedding, const std::vector<Exemplar<T>>& exemplars) const;

  // nullopt when the binarized mask is empty.
  std::optional<Exemplar<T>> make_exemplar(const DecoderOutput<T>& decoded, const SliceEmbedding<T>& embedding,
                                           bool prompted) const;
  // Same, from an explicit mask (teacher forcing) with the decoder's pointer.
  std::optional<Exemplar<T>> make_exemplar(const Tensor<T>& mask_logits, const Tensor<T>& pointer,
                                           const SliceEmbedding<T>& embedding, bool prompted) const;

  // Fixed sinusoidal encoding of a normalized position (x, y in [0, 1]).
  Tensor<T> position_encoding(double x, double y) const;
  // Centroid of mask_logits > 0 in normalized coordinates; nullopt if empty.
  static std::optional<std::array<double, 2>> mask_centroid(const Tensor<T>& mask_logits);

  // Copies memory-attention weights into exemplar attention.
  void copy_memory_to_exemplar_attention();
  const ConditioningAttention<T>& memory_attention() const { return memory_attn_; }
  const ConditioningAttention<T>& exemplar_attention() const {
    return config_.shared_attention ? memory_attn_ : exemplar_attn_;
  }

 private:
  Tensor<T> condition(const ConditioningAttention<T>& module, const SliceEmbedding<T>& embedding,
                      const std::vector<ContextItem<T>>& items, const std::vector<Tensor<T>>& key_offsets) const;

  ModelConfig config_;
  ParamStore<T> params_;
  std::vector<std::array<float, 2>> grid_positions_;
  Tensor<T> dense_pe_;  // [G*G, C] fixed

  // image encoder
  Conv<T> stem_;
  std::vector<Conv<T>> downs_;
  struct EncoderBlock {
    Norm<T> norm1, norm2;
    MultiHeadAttention<T> attn;
    Mlp<T> mlp;
  };
  std::vector<EncoderBlock> blocks_;
  Norm<T> encoder_norm_;

  // prompt encoder
  Tensor<T> label_embed_;      // [2, C]
  Tensor<T> no_memory_embed_;  // [1, C]

  // mask decoder
  Tensor<T> output_tokens_;  // [3, C]: object, iou, mask
  struct DecoderLayer {
    MultiHeadAttention<T> self_attn, token_to_image, image_to_token;
    Norm<T> norm1, norm2, norm3, norm4;
    Mlp<T> mlp;
  };
  std::vector<DecoderLayer> decoder_layers_;
  MultiHeadAttention<T> final_attn_;
  Norm<T> final_norm_;
  Conv<T> lowres_proj_, hires_proj_;
  Mlp<T> hyper_;
  Tensor<T> mask_bias_;  // [1]
  Mlp<T> iou_head_;
  Linear<T> object_head_;
  Linear<T> pointer_proj_;

  // memory encoder
  Conv<T> mask_embed_;
  Linear<T> image_proj_;
  Conv<T> fuse1_, fuse2_;

  ConditioningAttention<T> memory_attn_;
  ConditioningAttention<T> exemplar_attn_;
};

}  // namespace mois::model
