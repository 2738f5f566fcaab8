#include "mois/train/loss.hpp"

#include <stdexcept>

namespace mois::train {

namespace ts = mois::tensor;

namespace {

template <typename T>
void check_pair(const Tensor<T>& logits, const Tensor<T>& target, const char* what) {
  if (!logits.defined() || !target.defined()) throw std::invalid_argument(std::string(what) + ": undefined input");
  if (logits.shape() != target.shape()) {
    throw ts::ShapeError(std::string(what) + ": logits " + ts::to_string(logits.shape()) + " vs target " +
                         ts::to_string(target.shape()));
  }
}

template <typename T>
Tensor<T> one_minus(const Tensor<T>& x) {
  return ts::add_scalar(ts::neg(x), T(1));
}

}  // namespace

template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, const Tensor<T>& target, T alpha, T gamma) {
  check_pair(logits, target, "focal_loss");
  if (gamma != T(2)) throw std::invalid_argument("focal_loss: only gamma = 2 is supported");
  Tensor<T> p = ts::sigmoid(logits);
  Tensor<T> pos = ts::mul(ts::mul(target, ts::square(one_minus(p))), ts::log_sigmoid(logits));
  Tensor<T> negt = ts::mul(ts::mul(one_minus(target), ts::square(p)), ts::log_sigmoid(ts::neg(logits)));
  Tensor<T> l = ts::add(ts::scale(pos, -alpha), ts::scale(negt, -(T(1) - alpha)));
  return ts::mean(l);
}

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& logits, const Tensor<T>& target, T eps) {
  check_pair(logits, target, "dice_loss");
  Tensor<T> p = ts::sigmoid(logits);
  Tensor<T> inter = ts::sum(ts::mul(p, target));
  Tensor<T> denom = ts::add_scalar(ts::add(ts::sum(p), ts::sum(target)), eps);
  return one_minus(ts::div(ts::add_scalar(ts::scale(inter, T(2)), eps), denom));
}

template <typename T>
Tensor<T> iou_loss(const Tensor<T>& logits, const Tensor<T>& target, T eps) {
  check_pair(logits, target, "iou_loss");
  Tensor<T> p = ts::sigmoid(logits);
  Tensor<T> inter = ts::sum(ts::mul(p, target));
  Tensor<T> uni = ts::add_scalar(ts::sub(ts::add(ts::sum(p), ts::sum(target)), inter), eps);
  return one_minus(ts::div(ts::add_scalar(inter, eps), uni));
}

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& target) {
  check_pair(logits, target, "bce_loss");
  Tensor<T> l = ts::add(ts::mul(target, ts::log_sigmoid(logits)),
                        ts::mul(one_minus(target), ts::log_sigmoid(ts::neg(logits))));
  return ts::neg(ts::mean(l));
}

template <typename T>
double hard_iou(const Tensor<T>& logits, const Tensor<T>& target) {
  check_pair(logits, target, "hard_iou");
  int64_t inter = 0, uni = 0;
  auto p = logits.data();
  auto t = target.data();
  for (size_t i = 0; i < p.size(); ++i) {
    const bool a = p[i] > T(0), b = t[i] > T(0.5);
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"focal", w.focal}, {"dice", w.dice}, {"iou", w.iou}, {"object", w.object}, {"semantic", w.semantic}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  w = LossWeights{};
  w.focal = j.value("focal", w.focal);
  w.dice = j.value("dice", w.dice);
  w.iou = j.value("iou", w.iou);
  w.object = j.value("object", w.object);
  w.semantic = j.value("semantic", w.semantic);
}

template <typename T>
LossBreakdown<T> composite_loss(const std::vector<InstancePrediction<T>>& instances,
                                const std::vector<SemanticPrediction<T>>& semantic, const LossWeights& weights) {
  if (instances.empty() && semantic.empty()) throw std::invalid_argument("composite_loss: no predictions");
  LossBreakdown<T> out;
  std::vector<Tensor<T>> inst_terms, obj_terms, sem_terms;
  for (const auto& p : instances) {
    if (!p.logits.defined() || !p.iou.defined() || !p.object_score.defined() || !p.target.defined()) {
      throw std::invalid_argument("composite_loss: instance prediction is missing a head");
    }
    Tensor<T> visible = Tensor<T>::full(p.object_score.shape(), p.visible ? T(1) : T(0));
    Tensor<T> obj = bce_loss(p.object_score, visible);
    obj_terms.push_back(obj);
    if (!p.visible) continue;
    Tensor<T> f = focal_loss(p.logits, p.target);
    Tensor<T> d = dice_loss(p.logits, p.target);
    Tensor<T> actual = Tensor<T>::full(p.iou.shape(), static_cast<T>(hard_iou(p.logits, p.target)));
    Tensor<T> m = ts::mean(ts::square(ts::sub(p.iou, actual)));
    out.focal += static_cast<double>(f.item());
    out.dice += static_cast<double>(d.item());
    out.iou_mse += static_cast<double>(m.item());
    inst_terms.push_back(ts::add(ts::add(ts::scale(f, static_cast<T>(weights.focal)), ts::scale(d, static_cast<T>(weights.dice))),
                                 ts::scale(m, static_cast<T>(weights.iou))));
  }
  for (const auto& s : semantic) {
    if (!s.logits.defined() || !s.target.defined()) throw std::invalid_argument("composite_loss: semantic prediction missing");
    Tensor<T> b = bce_loss(s.logits, s.target), d = dice_loss(s.logits, s.target), i = iou_loss(s.logits, s.target);
    out.semantic_bce += static_cast<double>(b.item());
    out.semantic_dice += static_cast<double>(d.item());
    out.semantic_iou += static_cast<double>(i.item());
    sem_terms.push_back(ts::add(ts::add(b, d), i));
  }

  auto average = [](const std::vector<Tensor<T>>& terms) {
    if (terms.empty()) return Tensor<T>::scalar(T(0));
    Tensor<T> acc = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) acc = ts::add(acc, terms[i]);
    return ts::scale(acc, T(1) / static_cast<T>(terms.size()));
  };
  Tensor<T> l_inst = average(inst_terms);
  Tensor<T> l_obj = ts::scale(average(obj_terms), static_cast<T>(weights.object));
  Tensor<T> l_sem = ts::scale(average(sem_terms), static_cast<T>(weights.semantic));
  out.total = ts::add(ts::add(l_inst, l_obj), l_sem);

  const double n_vis = static_cast<double>(std::max<size_t>(inst_terms.size(), 1));
  const double n_sem = static_cast<double>(std::max<size_t>(sem_terms.size(), 1));
  out.focal /= n_vis;
  out.dice /= n_vis;
  out.iou_mse /= n_vis;
  out.semantic_bce /= n_sem;
  out.semantic_dice /= n_sem;
  out.semantic_iou /= n_sem;
  out.instance = static_cast<double>(l_inst.item());
  out.object = static_cast<double>(l_obj.item());
  out.semantic = static_cast<double>(l_sem.item());
  // Reported in double so the breakdown adds up exactly; total.item() may
  // differ from it by float rounding.
  out.total_value = out.instance + out.object + out.semantic;
  return out;
}

#define MOIS_LOSS(T)                                                                                           \
  template Tensor<T> focal_loss(const Tensor<T>&, const Tensor<T>&, T, T);                                      \
  template Tensor<T> dice_loss(const Tensor<T>&, const Tensor<T>&, T);                                          \
  template Tensor<T> iou_loss(const Tensor<T>&, const Tensor<T>&, T);                                           \
  template Tensor<T> bce_loss(const Tensor<T>&, const Tensor<T>&);                                              \
  template double hard_iou(const Tensor<T>&, const Tensor<T>&);                                                 \
  template LossBreakdown<T> composite_loss(const std::vector<InstancePrediction<T>>&,                           \
                                           const std::vector<SemanticPrediction<T>>&, const LossWeights&);
MOIS_LOSS(float)
MOIS_LOSS(double)
#undef MOIS_LOSS

}  // namespace mois::train
