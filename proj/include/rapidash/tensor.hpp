#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "rapidash/common.hpp"

namespace rapidash {

// Dense row-major (C-order) tensor, rank 1..4. Scalars live in shape {1}.
using Shape = std::vector<int>;

Eigen::Index shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {
struct TensorImpl {
  Shape shape;
  ArrayX value;
  ArrayX grad;  // empty until first use
  bool requires_grad = false;

  ArrayX& ensure_grad() {
    if (grad.size() != value.size()) grad = ArrayX::Zero(value.size());
    return grad;
  }
};
}  // namespace detail

// Value-semantic handle onto shared storage. Gradients accumulate additively
// across fan-out during Tape::backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, ArrayX value);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, real_t x);
  // Leaf with requires_grad set; the unit the optimizer updates.
  static Tensor param(Shape shape, ArrayX value);
  static Tensor from_matrix(const MatX& m);  // rank 2

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[i]; }
  Eigen::Index numel() const { return impl_->value.size(); }
  ArrayX& values() { return impl_->value; }
  const ArrayX& values() const { return impl_->value; }
  ArrayX& grad() { return impl_->ensure_grad(); }
  bool has_grad() const { return impl_->grad.size() == impl_->value.size(); }
  bool requires_grad() const { return impl_->requires_grad; }
  void zero_grad() { if (impl_->grad.size()) impl_->grad.setZero(); }
  real_t scalar_value() const;
  MatX to_matrix() const;  // rank 2

  std::shared_ptr<detail::TensorImpl> impl_;
};

// Reverse-mode tape. Nodes are recorded in construction order; backward
// replays them in exact reverse order once.
class Tape {
 public:
  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  // Seeds d(out)/d(out) = 1 (out must be scalar) and propagates.
  void backward(Tensor& out);

 private:
  std::vector<std::function<void()>> nodes_;
};

// Scoped activation; ops record onto the innermost active tape. With no
// active tape all ops run eagerly and track nothing.
Tape* active_tape();
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// ---- primitives ----------------------------------------------------------
// Binary ops broadcast with trailing-dimension alignment (dims must match or
// be 1 after right-aligning the shapes).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real_t s);
Tensor matmul(const Tensor& a, const Tensor& b);  // (n,k) x (k,m)
Tensor transpose(const Tensor& a);                // rank 2

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);
// out has n_rows rows; out.row(idx[e]) += x.row(e), accumulated in e order.
Tensor scatter_add(const Tensor& x, const std::vector<int>& idx, int n_rows);

Tensor reduce_sum(const Tensor& x, int axis);
Tensor reduce_mean(const Tensor& x, int axis);
Tensor sum_all(const Tensor& x);  // scalar, shape {1}

Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);

Tensor gelu(const Tensor& x);  // exact erf form
// Normalizes over the last axis, eps = 1e-5, no affine part.
Tensor layer_norm(const Tensor& x, real_t eps = static_cast<real_t>(1e-5));
Tensor power(const Tensor& x, int exponent);  // exponent in {0, 1, 2}
Tensor log_softmax(const Tensor& x);          // last axis

// -mean_i logp[i, labels[i]] for logp of shape (n, k).
Tensor nll_loss(const Tensor& logp, const std::vector<int>& labels);
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// out[p, k', c] = sum_l A[k', l] * x[p, l, c] for x of shape (P, O, C).
// A is a fixed geometric operator; no gradient flows into it.
Tensor fiber_matmul(const Tensor& x, const MatX& a);

}  // namespace rapidash
