#pragma once

#include <cstdint>

#include <json.hpp>

namespace mois::model {

struct ModelConfig {
  int input_size = 128;        // square slice extent fed to the encoder
  int patch_stride = 16;       // encoder grid = input_size / patch_stride
  int channels = 64;           // token width (d_vis = d_pos = d_ptr)
  int stem_channels = 32;      // stride-4 skip features
  int decoder_channels = 16;   // per-pixel mask features
  int encoder_blocks = 4;
  int encoder_heads = 2;
  int decoder_layers = 2;
  int decoder_heads = 2;
  int attention_layers = 4;    // memory and exemplar attention
  int attention_heads = 1;
  int mlp_ratio = 2;
  int memory_capacity = 7;     // N_mem
  int exemplar_capacity = 10;  // K
  double rope_base = 10000.0;
  bool shared_attention = false;        // exemplar path reuses memory-attention weights
  bool use_object_pointer = true;
  bool exemplar_slice_encoding = false; // additive encoding of slice distance on exemplar keys
  uint64_t seed = 1;

  int grid() const { return input_size / patch_stride; }
  int hires_size() const { return input_size / 4; }
  int rank_slots() const { return memory_capacity > exemplar_capacity ? memory_capacity : exemplar_capacity; }
  // Throws std::invalid_argument describing the first inconsistency.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace mois::model
