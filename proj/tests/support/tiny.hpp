#pragma once

#include "mois/model/config.hpp"
#include "mois/train/phantom.hpp"

namespace mois::testing {

// Small enough that a full forward/backward takes milliseconds.
inline model::ModelConfig tiny_model(int input = 32) {
  model::ModelConfig c;
  c.input_size = input;
  c.patch_stride = 8;
  c.channels = 16;
  c.stem_channels = 8;
  c.decoder_channels = 8;
  c.encoder_blocks = 1;
  c.encoder_heads = 2;
  c.decoder_layers = 1;
  c.decoder_heads = 2;
  c.attention_layers = 1;
  c.attention_heads = 1;
  c.seed = 3;
  return c;
}

inline train::PhantomConfig tiny_phantom() {
  train::PhantomConfig c;
  c.dims = {32, 32, 6};
  c.spacing = {3.0, 3.0, 6.0};
  c.lesion.count = {2, 3};
  c.lesion.radius_mm = {8, 12};
  c.distractor.count = {1, 1};
  c.distractor.radius_mm = {8, 10};
  c.margin = 1;
  return c;
}

}  // namespace mois::testing
