#include "mois/tensor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

namespace mois::tensor {

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
Tensor<T> make_op(const char* op, Shape shape, std::vector<T> data, std::vector<NodePtr<T>> inputs,
                  std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  node->leaf = false;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : inputs) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(inputs);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

void check_defined(bool defined, const char* op) {
  if (!defined) throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

// ---- broadcasting ----------------------------------------------------------

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (size_t i = 0; i < r; ++i) {
    const int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": shapes " + to_string(a) + " and " + to_string(b) +
                       " are not broadcast-compatible");
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  const size_t r = out.size();
  std::vector<int64_t> strides(r, 0);
  int64_t s = 1;
  for (size_t k = 0; k < in.size(); ++k) {
    const size_t i_in = in.size() - 1 - k;
    const size_t i_out = r - 1 - k;
    strides[i_out] = in[i_in] == 1 ? 0 : s;
    s *= in[i_in];
  }
  return strides;
}

template <class F>
void broadcast_loop(const Shape& out, const std::vector<int64_t>& sa, const std::vector<int64_t>& sb, F&& f) {
  const int r = static_cast<int>(out.size());
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  const int64_t inner = out[r - 1];
  const int64_t total = numel(out);
  if (inner == 0 || total == 0) return;
  const int64_t outer = total / inner;
  const int64_t step_a = sa[r - 1];
  const int64_t step_b = sb[r - 1];
  std::vector<int64_t> idx(r > 1 ? r - 1 : 0, 0);
  int64_t oa = 0, ob = 0, o = 0;
  for (int64_t n = 0; n < outer; ++n) {
    int64_t ia = oa, ib = ob;
    for (int64_t j = 0; j < inner; ++j, ++o, ia += step_a, ib += step_b) f(o, ia, ib);
    for (int d = r - 2; d >= 0; --d) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out[d]) break;
      oa -= sa[d] * out[d];
      ob -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

enum class Binary { kAdd, kSub, kMul, kDiv };

template <typename T>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, Binary kind, const char* name) {
  check_defined(a.defined() && b.defined(), name);
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const auto& da = a.node()->data;
  const auto& db = b.node()->data;
  auto apply = [kind](T x, T y) -> T {
    switch (kind) {
      case Binary::kAdd: return x + y;
      case Binary::kSub: return x - y;
      case Binary::kMul: return x * y;
      case Binary::kDiv: return x / y;
    }
    return T(0);
  };

  if (sa == sb) {
    std::vector<T> out(da.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = apply(da[i], db[i]);
    return make_op<T>(name, sa, std::move(out), {a.node_ptr(), b.node_ptr()}, [kind](Node<T>& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      const auto& g = self.grad;
      const size_t n = g.size();
      if (pa.requires_grad) {
        auto& ga = pa.ensure_grad();
        switch (kind) {
          case Binary::kAdd:
          case Binary::kSub:
            for (size_t i = 0; i < n; ++i) ga[i] += g[i];
            break;
          case Binary::kMul:
            for (size_t i = 0; i < n; ++i) ga[i] += g[i] * pb.data[i];
            break;
          case Binary::kDiv:
            for (size_t i = 0; i < n; ++i) ga[i] += g[i] / pb.data[i];
            break;
        }
      }
      if (pb.requires_grad) {
        auto& gb = pb.ensure_grad();
        switch (kind) {
          case Binary::kAdd:
            for (size_t i = 0; i < n; ++i) gb[i] += g[i];
            break;
          case Binary::kSub:
            for (size_t i = 0; i < n; ++i) gb[i] -= g[i];
            break;
          case Binary::kMul:
            for (size_t i = 0; i < n; ++i) gb[i] += g[i] * pa.data[i];
            break;
          case Binary::kDiv:
            for (size_t i = 0; i < n; ++i) gb[i] -= g[i] * pa.data[i] / (pb.data[i] * pb.data[i]);
            break;
        }
      }
    });
  }

  Shape out_shape = broadcast_shape(sa, sb, name);
  auto stride_a = broadcast_strides(sa, out_shape);
  auto stride_b = broadcast_strides(sb, out_shape);
  std::vector<T> out(numel(out_shape));
  broadcast_loop(out_shape, stride_a, stride_b,
                 [&](int64_t o, int64_t ia, int64_t ib) { out[o] = apply(da[ia], db[ib]); });
  return make_op<T>(name, out_shape, std::move(out), {a.node_ptr(), b.node_ptr()},
                    [kind, stride_a, stride_b](Node<T>& self) {
                      auto& pa = *self.parents[0];
                      auto& pb = *self.parents[1];
                      const auto& g = self.grad;
                      if (pa.requires_grad) {
                        auto& ga = pa.ensure_grad();
                        broadcast_loop(self.shape, stride_a, stride_b, [&](int64_t o, int64_t ia, int64_t ib) {
                          switch (kind) {
                            case Binary::kAdd:
                            case Binary::kSub: ga[ia] += g[o]; break;
                            case Binary::kMul: ga[ia] += g[o] * pb.data[ib]; break;
                            case Binary::kDiv: ga[ia] += g[o] / pb.data[ib]; break;
                          }
                        });
                      }
                      if (pb.requires_grad) {
                        auto& gb = pb.ensure_grad();
                        broadcast_loop(self.shape, stride_a, stride_b, [&](int64_t o, int64_t ia, int64_t ib) {
                          switch (kind) {
                            case Binary::kAdd: gb[ib] += g[o]; break;
                            case Binary::kSub: gb[ib] -= g[o]; break;
                            case Binary::kMul: gb[ib] += g[o] * pa.data[ia]; break;
                            case Binary::kDiv: gb[ib] -= g[o] * pa.data[ia] / (pb.data[ib] * pb.data[ib]); break;
                          }
                        });
                      }
                    });
}

// Elementwise unary op; derivative receives (x, y).
template <typename T, class Fwd, class Deriv>
Tensor<T> unary_op(const Tensor<T>& x, const char* name, Fwd fwd, Deriv deriv) {
  check_defined(x.defined(), name);
  const auto& dx = x.node()->data;
  std::vector<T> out(dx.size());
  for (size_t i = 0; i < dx.size(); ++i) out[i] = fwd(dx[i]);
  return make_op<T>(name, x.shape(), std::move(out), {x.node_ptr()}, [deriv](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& gp = p.ensure_grad();
    for (size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i] * deriv(p.data[i], self.data[i]);
  });
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---- Tensor -------------------------------------------------------------------

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  if (tensor::numel(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("tensor: shape " + to_string(shape) + " holds " + std::to_string(tensor::numel(shape)) +
                     " values but " + std::to_string(data.size()) + " were given");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  auto n = tensor::numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto n = tensor::numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
int64_t Tensor<T>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " + to_string(shape()));
  }
  return node_->shape[axis];
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  if (!node_->leaf) throw std::logic_error("tensor: only leaf tensors are writable");
  return node_->data;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
  return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<int64_t> index) const {
  if (static_cast<int>(index.size()) != rank()) throw ShapeError("at: index rank mismatch for " + to_string(shape()));
  int64_t off = 0;
  int axis = 0;
  for (auto i : index) {
    if (i < 0 || i >= node_->shape[axis]) throw ShapeError("at: index out of range for " + to_string(shape()));
    off = off * node_->shape[axis] + i;
    ++axis;
  }
  return node_->data[off];
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone(bool requires_grad) const {
  return Tensor(node_->shape, node_->data, requires_grad);
}

// ---- backward --------------------------------------------------------------------

template <typename T>
std::vector<Tensor<T>> backward(const Tensor<T>& loss) {
  check_defined(loss.defined(), "backward");
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));
  }
  if (!std::isfinite(static_cast<double>(loss.item()))) {
    throw std::domain_error("backward: loss is not finite");
  }
  if (!loss.requires_grad()) return {};

  // Iterative post-order DFS; `order` ends up topologically sorted (inputs first).
  std::vector<Node<T>*> order;
  std::vector<Tensor<T>> leaves;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  loss.node()->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->leaf || !node->backward_fn || node->grad.empty()) continue;
    node->backward_fn(*node);
  }

  // Collect leaves in first-visit order, then release the graph.
  std::unordered_set<Node<T>*> seen;
  std::vector<std::shared_ptr<Node<T>>> all_parents;
  for (Node<T>* node : order) {
    for (auto& p : node->parents) {
      if (p->leaf && p->requires_grad && seen.insert(p.get()).second) {
        p->ensure_grad();
        leaves.emplace_back(p);
      }
    }
  }
  if (loss.node()->leaf && loss.node()->requires_grad) leaves.emplace_back(loss.node_ptr());
  for (Node<T>* node : order) {
    if (node->leaf) continue;
    node->grad.clear();
    node->grad.shrink_to_fit();
    node->backward_fn = nullptr;
    node->parents.clear();
  }
  return leaves;
}

// ---- elementwise -------------------------------------------------------------------

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, Binary::kAdd, "add"); }
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, Binary::kSub, "sub"); }
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, Binary::kMul, "mul"); }
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, Binary::kDiv, "div"); }

template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& shape) {
  check_defined(x.defined(), "broadcast_to");
  Shape out_shape = broadcast_shape(x.shape(), shape, "broadcast_to");
  if (out_shape != shape) {
    throw ShapeError("broadcast_to: cannot broadcast " + to_string(x.shape()) + " to " + to_string(shape));
  }
  auto sx = broadcast_strides(x.shape(), shape);
  std::vector<int64_t> none(shape.size(), 0);
  const auto& dx = x.node()->data;
  std::vector<T> out(numel(shape));
  broadcast_loop(shape, sx, none, [&](int64_t o, int64_t ix, int64_t) { out[o] = dx[ix]; });
  return make_op<T>("broadcast_to", shape, std::move(out), {x.node_ptr()}, [sx, none](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& gp = p.ensure_grad();
    broadcast_loop(self.shape, sx, none, [&](int64_t o, int64_t ix, int64_t) { gp[ix] += self.grad[o]; });
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary_op(x, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  return unary_op(x, "add_scalar", [value](T v) { return v + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return unary_op(x, "neg", [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary_op(x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary_op(x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return unary_op(x, "log", [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary_op(x, "relu", [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  constexpr T inv_sqrt_2pi = T(0.39894228040143267794);
  return unary_op(
      x, "gelu", [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v, T) { return T(0.5) * (T(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(T(-0.5) * v * v); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary_op(
      x, "sigmoid",
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> log_sigmoid(const Tensor<T>& x) {
  return unary_op(
      x, "log_sigmoid", [](T v) { return std::min(v, T(0)) - std::log1p(std::exp(-std::abs(v))); },
      [](T v, T) {
        // d/dv log(sigmoid(v)) = sigmoid(-v)
        if (v >= T(0)) {
          const T e = std::exp(-v);
          return e / (T(1) + e);
        }
        return T(1) / (T(1) + std::exp(v));
      });
}

// ---- shape ------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
  check_defined(x.defined(), "reshape");
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  return make_op<T>("reshape", shape, x.node()->data, {x.node_ptr()}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& gp = p.ensure_grad();
    for (size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  check_defined(x.defined(), "transpose");
  if (x.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + to_string(x.shape()));
  const int64_t r = x.dim(0), c = x.dim(1);
  const auto& dx = x.node()->data;
  std::vector<T> out(dx.size());
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out[j * r + i] = dx[i * c + j];
  return make_op<T>("transpose", Shape{c, r}, std::move(out), {x.node_ptr()}, [r, c](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& gp = p.ensure_grad();
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) gp[i * c + j] += self.grad[j * r + i];
  });
}

namespace {

struct AxisSplit {
  int64_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit a;
  for (int i = 0; i < axis; ++i) a.outer *= s[i];
  a.len = s[axis];
  for (size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

int normalize_axis(int axis, int rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError(std::string(op) + ": axis out of range");
  return axis;
}

}  // namespace

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int64_t begin, int64_t end) {
  check_defined(x.defined(), "slice");
  axis = normalize_axis(axis, x.rank(), "slice");
  const auto sp = split_axis(x.shape(), axis);
  if (begin < 0 || end > sp.len || begin > end) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for shape " +
                     to_string(x.shape()) + " axis " + std::to_string(axis));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const int64_t n = end - begin;
  const auto& dx = x.node()->data;
  std::vector<T> out(numel(out_shape));
  for (int64_t o = 0; o < sp.outer; ++o) {
    const T* src = dx.data() + (o * sp.len + begin) * sp.inner;
    std::copy(src, src + n * sp.inner, out.data() + o * n * sp.inner);
  }
  return make_op<T>("slice", out_shape, std::move(out), {x.node_ptr()}, [sp, begin, n](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& gp = p.ensure_grad();
    for (int64_t o = 0; o < sp.outer; ++o) {
      T* dst = gp.data() + (o * sp.len + begin) * sp.inner;
      const T* src = self.grad.data() + o * n * sp.inner;
      for (int64_t i = 0; i < n * sp.inner; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  for (const auto& p : parts) check_defined(p.defined(), "concat");
  const int rank = parts[0].rank();
  axis = normalize_axis(axis, rank, "concat");
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == rank;
    for (int i = 0; ok && i < rank; ++i) ok = i == axis || p.shape()[i] == parts[0].shape()[i];
    if (!ok) {
      throw ShapeError("concat: shape " + to_string(p.shape()) + " does not match " + to_string(parts[0].shape()) +
                       " outside axis " + std::to_string(axis));
    }
    out_shape[axis] += p.shape()[axis];
  }
  const auto sp = split_axis(out_shape, axis);
  std::vector<T> out(numel(out_shape));
  std::vector<int64_t> offsets;
  std::vector<NodePtr<T>> inputs;
  int64_t off = 0;
  for (const auto& p : parts) {
    const int64_t len = p.shape()[axis];
    const auto& dp = p.node()->data;
    for (int64_t o = 0; o < sp.outer; ++o) {
      std::copy(dp.begin() + o * len * sp.inner, dp.begin() + (o + 1) * len * sp.inner,
                out.begin() + (o * sp.len + off) * sp.inner);
    }
    offsets.push_back(off);
    off += len;
    inputs.push_back(p.node_ptr());
  }
  return make_op<T>("concat", out_shape, std::move(out), std::move(inputs), [sp, offsets, axis](Node<T>& self) {
    for (size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& gp = p.ensure_grad();
      const int64_t len = p.shape[axis];
      for (int64_t o = 0; o < sp.outer; ++o) {
        const T* src = self.grad.data() + (o * sp.len + offsets[k]) * sp.inner;
        T* dst = gp.data() + o * len * sp.inner;
        for (int64_t i = 0; i < len * sp.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

// ---- reductions -------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  check_defined(x.defined(), "sum");
  T s = T(0);
  for (T v : x.node()->data) s += v;
  return make_op<T>("sum", Shape{}, std::vector<T>{s}, {x.node_ptr()}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& gp = p.ensure_grad();
    const T g = self.grad[0];
    for (auto& v : gp) v += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  check_defined(x.defined(), "mean");
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x, int axis) {
  check_defined(x.defined(), "sum");
  axis = normalize_axis(axis, x.rank(), "sum");
  const auto sp = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + axis);
  const auto& dx = x.node()->data;
  std::vector<T> out(sp.outer * sp.inner, T(0));
  for (int64_t o = 0; o < sp.outer; ++o)
    for (int64_t l = 0; l < sp.len; ++l)
      for (int64_t i = 0; i < sp.inner; ++i) out[o * sp.inner + i] += dx[(o * sp.len + l) * sp.inner + i];
  return make_op<T>("sum_axis", out_shape, std::move(out), {x.node_ptr()}, [sp](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& gp = p.ensure_grad();
    for (int64_t o = 0; o < sp.outer; ++o)
      for (int64_t l = 0; l < sp.len; ++l)
        for (int64_t i = 0; i < sp.inner; ++i) gp[(o * sp.len + l) * sp.inner + i] += self.grad[o * sp.inner + i];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, int axis) {
  const int64_t len = x.dim(axis);
  if (len == 0) throw ShapeError("mean: empty axis");
  return scale(sum(x, axis), T(1) / static_cast<T>(len));
}

// ---- gemm -------------------------------------------------------------------------

template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c,
          bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  std::vector<T> bt;
  if (trans_b) {
    // Materialize B as [k,n] so the inner loop runs over contiguous columns.
    bt.resize(k * n);
    for (int64_t j = 0; j < n; ++j)
      for (int64_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    b = bt.data();
  }
  if (!trans_a) {
    for (int64_t i = 0; i < m; ++i) {
      T* crow = c + i * n;
      const T* arow = a + i * k;
      for (int64_t p = 0; p < k; ++p) {
        const T av = arow[p];
        if (av == T(0)) continue;
        const T* brow = b + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (int64_t p = 0; p < k; ++p) {
      const T* arow = a + p * m;
      const T* brow = b + p * n;
      for (int64_t i = 0; i < m; ++i) {
        const T av = arow[i];
        if (av == T(0)) continue;
        T* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check_defined(a.defined() && b.defined(), "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n);
  gemm<T>(false, false, m, n, k, a.node()->data.data(), b.node()->data.data(), out.data(), false);
  return make_op<T>("matmul", Shape{m, n}, std::move(out), {a.node_ptr(), b.node_ptr()}, [m, n, k](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      // dA = dC B^T
      gemm<T>(false, true, m, k, n, self.grad.data(), pb.data.data(), pa.ensure_grad().data(), true);
    }
    if (pb.requires_grad) {
      // dB = A^T dC
      gemm<T>(true, false, k, n, m, pa.data.data(), self.grad.data(), pb.ensure_grad().data(), true);
    }
  });
}

// ---- softmax / layer norm -----------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  check_defined(x.defined(), "softmax");
  if (x.rank() == 0) throw ShapeError("softmax: scalar input");
  const int64_t cols = x.dim(-1);
  const int64_t rows = cols == 0 ? 0 : x.numel() / cols;
  const auto& dx = x.node()->data;
  std::vector<T> out(dx.size());
  for (int64_t r = 0; r < rows; ++r) {
    const T* in = dx.data() + r * cols;
    T* o = out.data() + r * cols;
    T mx = in[0];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
    T s = T(0);
    for (int64_t j = 0; j < cols; ++j) {
      o[j] = std::exp(in[j] - mx);
      s += o[j];
    }
    const T inv = T(1) / s;
    for (int64_t j = 0; j < cols; ++j) o[j] *= inv;
  }
  return make_op<T>("softmax", x.shape(), std::move(out), {x.node_ptr()}, [rows, cols](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& gp = p.ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const T* y = self.data.data() + r * cols;
      const T* g = self.grad.data() + r * cols;
      T dot = T(0);
      for (int64_t j = 0; j < cols; ++j) dot += g[j] * y[j];
      T* d = gp.data() + r * cols;
      for (int64_t j = 0; j < cols; ++j) d[j] += y[j] * (g[j] - dot);
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, T eps) {
  check_defined(x.defined(), "layer_norm");
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const int64_t cols = x.dim(-1);
  const int64_t rows = cols == 0 ? 0 : x.numel() / cols;
  const auto& dx = x.node()->data;
  std::vector<T> out(dx.size());
  std::vector<T> inv_std(rows);
  for (int64_t r = 0; r < rows; ++r) {
    const T* in = dx.data() + r * cols;
    T mu = T(0);
    for (int64_t j = 0; j < cols; ++j) mu += in[j];
    mu /= static_cast<T>(cols);
    T var = T(0);
    for (int64_t j = 0; j < cols; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<T>(cols);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    T* o = out.data() + r * cols;
    for (int64_t j = 0; j < cols; ++j) o[j] = (in[j] - mu) * is;
  }
  return make_op<T>("layer_norm", x.shape(), std::move(out), {x.node_ptr()},
                    [rows, cols, inv_std = std::move(inv_std)](Node<T>& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      auto& gp = p.ensure_grad();
                      const T n = static_cast<T>(cols);
                      for (int64_t r = 0; r < rows; ++r) {
                        const T* y = self.data.data() + r * cols;
                        const T* g = self.grad.data() + r * cols;
                        T mg = T(0), mgy = T(0);
                        for (int64_t j = 0; j < cols; ++j) {
                          mg += g[j];
                          mgy += g[j] * y[j];
                        }
                        mg /= n;
                        mgy /= n;
                        T* d = gp.data() + r * cols;
                        for (int64_t j = 0; j < cols; ++j) d[j] += inv_std[r] * (g[j] - mg - y[j] * mgy);
                      }
                    });
}

// ---- conv2d ------------------------------------------------------------------------

namespace {

struct ConvGeometry {
  int64_t c, h, w, o, kh, kw, stride, pad, oh, ow;
};

template <typename T>
void im2col(const T* in, const ConvGeometry& g, T* cols) {
  const int64_t npos = g.oh * g.ow;
  for (int64_t ci = 0; ci < g.c; ++ci)
    for (int64_t ky = 0; ky < g.kh; ++ky)
      for (int64_t kx = 0; kx < g.kw; ++kx) {
        T* row = cols + ((ci * g.kh + ky) * g.kw + kx) * npos;
        for (int64_t y = 0; y < g.oh; ++y) {
          const int64_t iy = y * g.stride - g.pad + ky;
          for (int64_t x = 0; x < g.ow; ++x) {
            const int64_t ix = x * g.stride - g.pad + kx;
            row[y * g.ow + x] = (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? in[(ci * g.h + iy) * g.w + ix] : T(0);
          }
        }
      }
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* in_grad) {
  const int64_t npos = g.oh * g.ow;
  for (int64_t ci = 0; ci < g.c; ++ci)
    for (int64_t ky = 0; ky < g.kh; ++ky)
      for (int64_t kx = 0; kx < g.kw; ++kx) {
        const T* row = cols + ((ci * g.kh + ky) * g.kw + kx) * npos;
        for (int64_t y = 0; y < g.oh; ++y) {
          const int64_t iy = y * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int64_t x = 0; x < g.ow; ++x) {
            const int64_t ix = x * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) in_grad[(ci * g.h + iy) * g.w + ix] += row[y * g.ow + x];
          }
        }
      }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dOptions options) {
  check_defined(input.defined() && weight.defined(), "conv2d");
  if (input.rank() != 3 || weight.rank() != 4 || weight.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d: input " + to_string(input.shape()) + " incompatible with weight " +
                     to_string(weight.shape()));
  }
  if (options.stride < 1 || options.padding < 0) throw ShapeError("conv2d: invalid stride/padding");
  ConvGeometry g{};
  g.c = input.dim(0);
  g.h = input.dim(1);
  g.w = input.dim(2);
  g.o = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = options.stride;
  g.pad = options.padding;
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
    throw ShapeError("conv2d: kernel " + to_string(weight.shape()) + " larger than padded input " +
                     to_string(input.shape()));
  }
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != g.o)) {
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " does not match " + std::to_string(g.o) +
                     " output channels");
  }
  const int64_t ck = g.c * g.kh * g.kw;
  const int64_t npos = g.oh * g.ow;
  std::vector<T> cols(ck * npos);
  im2col(input.node()->data.data(), g, cols.data());
  std::vector<T> out(g.o * npos);
  gemm<T>(false, false, g.o, npos, ck, weight.node()->data.data(), cols.data(), out.data(), false);
  if (has_bias) {
    const auto& b = bias.node()->data;
    for (int64_t oc = 0; oc < g.o; ++oc)
      for (int64_t i = 0; i < npos; ++i) out[oc * npos + i] += b[oc];
  }
  std::vector<NodePtr<T>> inputs{input.node_ptr(), weight.node_ptr()};
  if (has_bias) inputs.push_back(bias.node_ptr());
  return make_op<T>("conv2d", Shape{g.o, g.oh, g.ow}, std::move(out), std::move(inputs),
                    [g, ck, npos](Node<T>& self) {
                      auto& pin = *self.parents[0];
                      auto& pw = *self.parents[1];
                      if (pw.requires_grad) {
                        std::vector<T> cols(ck * npos);
                        im2col(pin.data.data(), g, cols.data());
                        gemm<T>(false, true, g.o, ck, npos, self.grad.data(), cols.data(), pw.ensure_grad().data(),
                                true);
                      }
                      if (pin.requires_grad) {
                        std::vector<T> dcols(ck * npos);
                        gemm<T>(true, false, ck, npos, g.o, pw.data.data(), self.grad.data(), dcols.data(), false);
                        col2im(dcols.data(), g, pin.ensure_grad().data());
                      }
                      if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
                        auto& gb = self.parents[2]->ensure_grad();
                        for (int64_t oc = 0; oc < g.o; ++oc) {
                          T s = T(0);
                          for (int64_t i = 0; i < npos; ++i) s += self.grad[oc * npos + i];
                          gb[oc] += s;
                        }
                      }
                    });
}

// ---- bilinear upsample ---------------------------------------------------------------

namespace {

struct Interp {
  std::vector<int64_t> i0, i1;
  std::vector<double> w1;
};

Interp make_interp(int64_t in, int64_t out) {
  Interp t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.w1.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int64_t i0 = static_cast<int64_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    t.i0[o] = i0;
    t.i1[o] = std::min(i0 + 1, in - 1);
    t.w1[o] = src - static_cast<double>(i0);
  }
  return t;
}

}  // namespace

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int64_t out_h, int64_t out_w) {
  check_defined(x.defined(), "upsample_bilinear");
  if (x.rank() != 3 || out_h < 1 || out_w < 1) {
    throw ShapeError("upsample_bilinear: expected [C,H,W] input and positive output size, got " + to_string(x.shape()));
  }
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  auto ty = make_interp(h, out_h);
  auto tx = make_interp(w, out_w);
  const auto& dx = x.node()->data;
  std::vector<T> out(c * out_h * out_w);
  for (int64_t ch = 0; ch < c; ++ch) {
    const T* src = dx.data() + ch * h * w;
    T* dst = out.data() + ch * out_h * out_w;
    for (int64_t y = 0; y < out_h; ++y) {
      const T wy1 = static_cast<T>(ty.w1[y]), wy0 = T(1) - wy1;
      const T* r0 = src + ty.i0[y] * w;
      const T* r1 = src + ty.i1[y] * w;
      for (int64_t xx = 0; xx < out_w; ++xx) {
        const T wx1 = static_cast<T>(tx.w1[xx]), wx0 = T(1) - wx1;
        dst[y * out_w + xx] = wy0 * (wx0 * r0[tx.i0[xx]] + wx1 * r0[tx.i1[xx]]) +
                              wy1 * (wx0 * r1[tx.i0[xx]] + wx1 * r1[tx.i1[xx]]);
      }
    }
  }
  return make_op<T>("upsample_bilinear", Shape{c, out_h, out_w}, std::move(out), {x.node_ptr()},
                    [c, h, w, out_h, out_w, ty = std::move(ty), tx = std::move(tx)](Node<T>& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      auto& gp = p.ensure_grad();
                      for (int64_t ch = 0; ch < c; ++ch) {
                        T* dst = gp.data() + ch * h * w;
                        const T* g = self.grad.data() + ch * out_h * out_w;
                        for (int64_t y = 0; y < out_h; ++y) {
                          const T wy1 = static_cast<T>(ty.w1[y]), wy0 = T(1) - wy1;
                          T* r0 = dst + ty.i0[y] * w;
                          T* r1 = dst + ty.i1[y] * w;
                          for (int64_t xx = 0; xx < out_w; ++xx) {
                            const T wx1 = static_cast<T>(tx.w1[xx]), wx0 = T(1) - wx1;
                            const T gv = g[y * out_w + xx];
                            r0[tx.i0[xx]] += gv * wy0 * wx0;
                            r0[tx.i1[xx]] += gv * wy0 * wx1;
                            r1[tx.i0[xx]] += gv * wy1 * wx0;
                            r1[tx.i1[xx]] += gv * wy1 * wx1;
                          }
                        }
                      }
                    });
}

// ---- rotary encoding / attention --------------------------------------------------------

template <typename T>
Tensor<T> rope2d(const Tensor<T>& x, std::span<const std::array<float, 2>> positions, double base) {
  check_defined(x.defined(), "rope2d");
  if (x.rank() != 2 || x.dim(1) % 4 != 0) {
    throw ShapeError("rope2d: expected [N,d] with d divisible by 4, got " + to_string(x.shape()));
  }
  const int64_t n = x.dim(0), d = x.dim(1);
  if (static_cast<int64_t>(positions.size()) != n) {
    throw ShapeError("rope2d: " + std::to_string(positions.size()) + " positions for " + std::to_string(n) + " rows");
  }
  const int64_t quarter = d / 4;
  std::vector<T> cosv(n * (d / 2)), sinv(n * (d / 2));
  for (int64_t r = 0; r < n; ++r) {
    for (int64_t pair = 0; pair < d / 2; ++pair) {
      const int64_t j = pair % quarter;
      const double freq = std::pow(base, -4.0 * static_cast<double>(j) / static_cast<double>(d));
      const double pos = pair < quarter ? positions[r][0] : positions[r][1];
      cosv[r * (d / 2) + pair] = static_cast<T>(std::cos(pos * freq));
      sinv[r * (d / 2) + pair] = static_cast<T>(std::sin(pos * freq));
    }
  }
  const auto& dx = x.node()->data;
  std::vector<T> out(dx.size());
  for (int64_t r = 0; r < n; ++r)
    for (int64_t pair = 0; pair < d / 2; ++pair) {
      const T c = cosv[r * (d / 2) + pair], s = sinv[r * (d / 2) + pair];
      const T a = dx[r * d + 2 * pair], b = dx[r * d + 2 * pair + 1];
      out[r * d + 2 * pair] = a * c - b * s;
      out[r * d + 2 * pair + 1] = a * s + b * c;
    }
  return make_op<T>("rope2d", x.shape(), std::move(out), {x.node_ptr()},
                    [n, d, cosv = std::move(cosv), sinv = std::move(sinv)](Node<T>& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      auto& gp = p.ensure_grad();
                      for (int64_t r = 0; r < n; ++r)
                        for (int64_t pair = 0; pair < d / 2; ++pair) {
                          const T c = cosv[r * (d / 2) + pair], s = sinv[r * (d / 2) + pair];
                          const T ga = self.grad[r * d + 2 * pair], gb = self.grad[r * d + 2 * pair + 1];
                          gp[r * d + 2 * pair] += ga * c + gb * s;
                          gp[r * d + 2 * pair + 1] += -ga * s + gb * c;
                        }
                    });
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const AttentionOptions& options) {
  check_defined(q.defined() && k.defined() && v.defined(), "attention");
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw ShapeError("attention: expected rank-2 q/k/v, got " + to_string(q.shape()) + ", " + to_string(k.shape()) +
                     ", " + to_string(v.shape()));
  }
  if (q.dim(1) != k.dim(1)) {
    throw ShapeError("attention: head dimension mismatch between q " + to_string(q.shape()) + " and k " +
                     to_string(k.shape()));
  }
  if (k.dim(0) != v.dim(0)) {
    throw ShapeError("attention: key count " + std::to_string(k.dim(0)) + " != value count " +
                     std::to_string(v.dim(0)));
  }
  const int heads = options.heads;
  const int64_t d = q.dim(1), dv = v.dim(1), nk = k.dim(0);
  if (heads < 1 || d % heads != 0 || dv % heads != 0) {
    throw ShapeError("attention: dimensions " + std::to_string(d) + "/" + std::to_string(dv) +
                     " not divisible by head count " + std::to_string(heads));
  }
  const int64_t nrot = static_cast<int64_t>(options.k_positions.size());
  if (options.rope && (static_cast<int64_t>(options.q_positions.size()) != q.dim(0) || nrot > nk)) {
    throw ShapeError("attention: rope positions do not match q/k row counts");
  }
  const int64_t dh = d / heads, dvh = dv / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<Tensor<T>> outs;
  for (int h = 0; h < heads; ++h) {
    Tensor<T> qh = heads == 1 ? q : slice(q, 1, h * dh, (h + 1) * dh);
    Tensor<T> kh = heads == 1 ? k : slice(k, 1, h * dh, (h + 1) * dh);
    Tensor<T> vh = heads == 1 ? v : slice(v, 1, h * dvh, (h + 1) * dvh);
    if (options.rope) {
      qh = rope2d(qh, options.q_positions, options.rope_base);
      if (nrot == nk) {
        kh = rope2d(kh, options.k_positions, options.rope_base);
      } else if (nrot > 0) {
        kh = concat<T>({rope2d(slice(kh, 0, 0, nrot), options.k_positions, options.rope_base), slice(kh, 0, nrot, nk)},
                       0);
      }
    }
    auto scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    outs.push_back(matmul(softmax(scores), vh));
  }
  return heads == 1 ? outs[0] : concat(outs, 1);
}

// ---- instantiation -----------------------------------------------------------------

#define MOIS_INSTANTIATE(T)                                                                                  \
  template class Tensor<T>;                                                                                  \
  template std::vector<Tensor<T>> backward(const Tensor<T>&);                                                \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> broadcast_to(const Tensor<T>&, const Shape&);                                           \
  template Tensor<T> scale(const Tensor<T>&, T);                                                             \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                        \
  template Tensor<T> neg(const Tensor<T>&);                                                                  \
  template Tensor<T> square(const Tensor<T>&);                                                               \
  template Tensor<T> exp(const Tensor<T>&);                                                                  \
  template Tensor<T> log(const Tensor<T>&);                                                                  \
  template Tensor<T> relu(const Tensor<T>&);                                                                 \
  template Tensor<T> gelu(const Tensor<T>&);                                                                 \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                              \
  template Tensor<T> log_sigmoid(const Tensor<T>&);                                                          \
  template Tensor<T> reshape(const Tensor<T>&, const Shape&);                                                \
  template Tensor<T> transpose(const Tensor<T>&);                                                            \
  template Tensor<T> slice(const Tensor<T>&, int, int64_t, int64_t);                                         \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                             \
  template Tensor<T> sum(const Tensor<T>&);                                                                  \
  template Tensor<T> mean(const Tensor<T>&);                                                                 \
  template Tensor<T> sum(const Tensor<T>&, int);                                                             \
  template Tensor<T> mean(const Tensor<T>&, int);                                                            \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> softmax(const Tensor<T>&);                                                              \
  template Tensor<T> layer_norm(const Tensor<T>&, T);                                                        \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dOptions);            \
  template Tensor<T> upsample_bilinear(const Tensor<T>&, int64_t, int64_t);                                  \
  template Tensor<T> rope2d(const Tensor<T>&, std::span<const std::array<float, 2>>, double);                \
  template Tensor<T> attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const AttentionOptions&); \
  template void gemm(bool, bool, int64_t, int64_t, int64_t, const T*, const T*, T*, bool);

MOIS_INSTANTIATE(float)
MOIS_INSTANTIATE(double)

#undef MOIS_INSTANTIATE

}  // namespace mois::tensor
