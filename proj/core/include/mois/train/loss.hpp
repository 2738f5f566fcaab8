#pragma once

// Training losses. Every term is a scalar Tensor so the composite loss is
// differentiable end to end; targets are constants of the logits' shape.

#include <vector>

#include <json.hpp>

#include "mois/tensor/tensor.hpp"

namespace mois::train {

using tensor::Tensor;

inline constexpr double kLossEpsilon = 1e-6;

// Sigmoid focal loss, mean over elements.
template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, const Tensor<T>& target, T alpha = T(0.25), T gamma = T(2));
// 1 - (2|P.G| + eps) / (|P| + |G| + eps) on sigmoid probabilities.
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& logits, const Tensor<T>& target, T eps = T(kLossEpsilon));
// 1 - (|P.G| + eps) / (|P| + |G| - |P.G| + eps).
template <typename T>
Tensor<T> iou_loss(const Tensor<T>& logits, const Tensor<T>& target, T eps = T(kLossEpsilon));
// Binary cross-entropy with logits, mean over elements.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& target);

// IoU of the binarized logits (> 0) against the target (> 0.5); 1 when both are empty.
template <typename T>
double hard_iou(const Tensor<T>& logits, const Tensor<T>& target);

template <typename T>
struct InstancePrediction {
  Tensor<T> logits;        // [S, S]
  Tensor<T> iou;           // [1]
  Tensor<T> object_score;  // [1] logit
  Tensor<T> target;        // [S, S] in {0, 1}
  bool visible = false;    // target non-empty
};

template <typename T>
struct SemanticPrediction {
  Tensor<T> logits;  // [S, S]
  Tensor<T> target;  // [S, S], all class-A lesions
};

struct LossWeights {
  double focal = 20.0;
  double dice = 1.0;
  double iou = 1.0;
  double object = 1.0;
  double semantic = 1.0;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

template <typename T>
struct LossBreakdown {
  Tensor<T> total;
  double total_value = 0;  // instance + object + semantic
  double instance = 0;  // weighted focal + dice + IoU-prediction MSE, mean over visible predictions
  double object = 0;    // BCE on object scores, mean over instance predictions
  double semantic = 0;  // BCE + Dice + IoU, mean over slices
  double focal = 0, dice = 0, iou_mse = 0;
  double semantic_bce = 0, semantic_dice = 0, semantic_iou = 0;
};

// L_total = L_instance + L_object + L_semantic. Throws std::invalid_argument
// when a prediction lacks one of its heads or there is nothing to score.
template <typename T>
LossBreakdown<T> composite_loss(const std::vector<InstancePrediction<T>>& instances,
                                const std::vector<SemanticPrediction<T>>& semantic,
                                const LossWeights& weights = {});

}  // namespace mois::train
