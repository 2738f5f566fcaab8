#pragma once

// Dense row-major tensors with tape-free reverse-mode differentiation.
//
// Every op returns a new Tensor whose node keeps references to its inputs and
// a closure that pushes the output adjoint back to them. backward() walks the
// nodes reachable from a scalar loss in reverse topological order. Leaves
// created with requires_grad accumulate their adjoint across backward passes
// until zero_grad(); intermediate adjoints and graph links are released after
// each pass.

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mois::tensor {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int64_t dim(int axis) const;
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }

  std::span<const T> data() const { return node_->data; }
  // Writable view; only leaves may be written (parameters, optimizer state).
  std::span<T> mutable_data();
  T item() const;
  T at(std::initializer_list<int64_t> index) const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && node_->grad.size() == node_->data.size() && !node_->data.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  // Shares nothing with the graph; a fresh leaf holding a copy of the values.
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }
  const char* op_name() const { return node_->op; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Gradient recording switch. Thread-local so independent graphs may be built
// on different threads.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Runs reverse-mode accumulation from a scalar loss. Returns the trainable
// leaves that were reached, in first-visit order.
template <typename T>
std::vector<Tensor<T>> backward(const Tensor<T>& loss);

// ---- elementwise / broadcasting ------------------------------------------

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& shape);

template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T value);
template <typename T> Tensor<T> neg(const Tensor<T>& x);
template <typename T> Tensor<T> square(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> log(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> log_sigmoid(const Tensor<T>& x);

// ---- shape ----------------------------------------------------------------

template <typename T> Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);
// Swaps the two axes of a rank-2 tensor.
template <typename T> Tensor<T> transpose(const Tensor<T>& x);
template <typename T> Tensor<T> slice(const Tensor<T>& x, int axis, int64_t begin, int64_t end);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);

// ---- reductions -------------------------------------------------------------

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
// Reduces one axis, removing it from the shape.
template <typename T> Tensor<T> sum(const Tensor<T>& x, int axis);
template <typename T> Tensor<T> mean(const Tensor<T>& x, int axis);

// ---- linear algebra / nn ------------------------------------------------------

// [m,k] x [k,n] -> [m,n]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// Softmax over the last axis.
template <typename T> Tensor<T> softmax(const Tensor<T>& x);
// Normalizes the last axis to zero mean / unit variance (no affine).
template <typename T> Tensor<T> layer_norm(const Tensor<T>& x, T eps = T(1e-5));

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
};

// input [C,H,W], weight [O,C,kh,kw], bias [O] (optional) -> [O,Ho,Wo]
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv2dOptions options = {});

// Bilinear resize of [C,H,W] to [C,out_h,out_w], half-pixel centers.
template <typename T> Tensor<T> upsample_bilinear(const Tensor<T>& x, int64_t out_h, int64_t out_w);

// Rotary encoding on [N,d] rows. Pairs (2i,2i+1) for i < d/4 rotate by the
// row's x position, the remaining pairs by its y position; frequency of pair j
// within an axis is base^(-4j/d). d must be a multiple of 4.
template <typename T>
Tensor<T> rope2d(const Tensor<T>& x, std::span<const std::array<float, 2>> positions, double base = 10000.0);

struct AttentionOptions {
  int heads = 1;
  bool rope = false;
  double rope_base = 10000.0;
  // Grid positions of queries and of the first k_positions.size() keys. Keys
  // beyond that count are not rotated (pointer / sink tokens).
  std::span<const std::array<float, 2>> q_positions;
  std::span<const std::array<float, 2>> k_positions;
};

// softmax(q k^T / sqrt(d_head)) v per head. q [Nq,d], k [Nk,d], v [Nk,dv].
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    const AttentionOptions& options = {});

// Low-level C(+)=op(A)op(B) used by matmul and conv2d; exposed for benchmarks.
template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c,
          bool accumulate);

}  // namespace mois::tensor
