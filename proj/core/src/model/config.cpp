#include "mois/model/config.hpp"

#include <stdexcept>
#include <string>

namespace mois::model {

namespace {

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("model config: " + what);
}

}  // namespace

void ModelConfig::validate() const {
  require(input_size >= 8 && input_size % 4 == 0, "input_size must be a multiple of 4 and >= 8");
  require(patch_stride >= 4 && power_of_two(patch_stride / 4) && patch_stride % 4 == 0,
          "patch_stride must be 4 times a power of two");
  require(input_size % patch_stride == 0, "input_size must be divisible by patch_stride");
  require(channels >= 4 && channels % 4 == 0, "channels must be a positive multiple of 4");
  require(stem_channels >= 1 && decoder_channels >= 1, "stem/decoder channels must be positive");
  require(encoder_heads >= 1 && channels % (4 * encoder_heads) == 0,
          "channels / encoder_heads must be a multiple of 4 for rotary encoding");
  require(attention_heads >= 1 && channels % (4 * attention_heads) == 0,
          "channels / attention_heads must be a multiple of 4 for rotary encoding");
  require(decoder_heads >= 1 && channels % decoder_heads == 0, "channels must be divisible by decoder_heads");
  require(encoder_blocks >= 0 && decoder_layers >= 1 && attention_layers >= 1, "layer counts out of range");
  require(mlp_ratio >= 1, "mlp_ratio must be >= 1");
  require(memory_capacity >= 1 && exemplar_capacity >= 1, "bank capacities must be >= 1");
  require(rope_base > 1, "rope_base must exceed 1");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"input_size", c.input_size},
       {"patch_stride", c.patch_stride},
       {"channels", c.channels},
       {"stem_channels", c.stem_channels},
       {"decoder_channels", c.decoder_channels},
       {"encoder_blocks", c.encoder_blocks},
       {"encoder_heads", c.encoder_heads},
       {"decoder_layers", c.decoder_layers},
       {"decoder_heads", c.decoder_heads},
       {"attention_layers", c.attention_layers},
       {"attention_heads", c.attention_heads},
       {"mlp_ratio", c.mlp_ratio},
       {"memory_capacity", c.memory_capacity},
       {"exemplar_capacity", c.exemplar_capacity},
       {"rope_base", c.rope_base},
       {"shared_attention", c.shared_attention},
       {"use_object_pointer", c.use_object_pointer},
       {"exemplar_slice_encoding", c.exemplar_slice_encoding},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.input_size = j.value("input_size", d.input_size);
  c.patch_stride = j.value("patch_stride", d.patch_stride);
  c.channels = j.value("channels", d.channels);
  c.stem_channels = j.value("stem_channels", d.stem_channels);
  c.decoder_channels = j.value("decoder_channels", d.decoder_channels);
  c.encoder_blocks = j.value("encoder_blocks", d.encoder_blocks);
  c.encoder_heads = j.value("encoder_heads", d.encoder_heads);
  c.decoder_layers = j.value("decoder_layers", d.decoder_layers);
  c.decoder_heads = j.value("decoder_heads", d.decoder_heads);
  c.attention_layers = j.value("attention_layers", d.attention_layers);
  c.attention_heads = j.value("attention_heads", d.attention_heads);
  c.mlp_ratio = j.value("mlp_ratio", d.mlp_ratio);
  c.memory_capacity = j.value("memory_capacity", d.memory_capacity);
  c.exemplar_capacity = j.value("exemplar_capacity", d.exemplar_capacity);
  c.rope_base = j.value("rope_base", d.rope_base);
  c.shared_attention = j.value("shared_attention", d.shared_attention);
  c.use_object_pointer = j.value("use_object_pointer", d.use_object_pointer);
  c.exemplar_slice_encoding = j.value("exemplar_slice_encoding", d.exemplar_slice_encoding);
  c.seed = j.value("seed", d.seed);
}

}  // namespace mois::model
