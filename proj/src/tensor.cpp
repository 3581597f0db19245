#include "rapidash/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rapidash {

namespace {

using RowMat = Eigen::Matrix<real_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

thread_local Tape* g_active_tape = nullptr;

bool track(std::initializer_list<Tensor> inputs) {
  if (!g_active_tape) return false;
  for (const Tensor& t : inputs)
    if (t.requires_grad()) return true;
  return false;
}

Tensor make_output(Shape shape, ArrayX value, bool requires_grad) {
  Tensor t;
  t.impl_ = std::make_shared<detail::TensorImpl>();
  t.impl_->shape = std::move(shape);
  t.impl_->value = std::move(value);
  t.impl_->requires_grad = requires_grad;
  check(shape_numel(t.impl_->shape) == t.impl_->value.size(),
        "tensor: shape does not match data length");
  return t;
}

// Row decomposition around an axis: x viewed as (outer, shape[axis], inner).
void axis_split(const Shape& s, int axis, Eigen::Index& outer, Eigen::Index& mid,
                Eigen::Index& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  mid = s[axis];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace

Eigen::Index shape_numel(const Shape& s) {
  Eigen::Index n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

Tensor Tensor::constant(Shape shape, ArrayX value) {
  return make_output(std::move(shape), std::move(value), false);
}

Tensor Tensor::zeros(Shape shape) {
  Eigen::Index n = shape_numel(shape);
  return make_output(std::move(shape), ArrayX::Zero(n), false);
}

Tensor Tensor::full(Shape shape, real_t x) {
  Eigen::Index n = shape_numel(shape);
  return make_output(std::move(shape), ArrayX::Constant(n, x), false);
}

Tensor Tensor::param(Shape shape, ArrayX value) {
  Tensor t = make_output(std::move(shape), std::move(value), true);
  return t;
}

Tensor Tensor::from_matrix(const MatX& m) {
  ArrayX v(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      v[i * m.cols() + j] = static_cast<real_t>(m(i, j));
  return make_output({static_cast<int>(m.rows()), static_cast<int>(m.cols())}, std::move(v),
                     false);
}

real_t Tensor::scalar_value() const {
  check(numel() == 1, "scalar_value: tensor has " + shape_str(shape()));
  return impl_->value[0];
}

MatX Tensor::to_matrix() const {
  check(rank() == 2, "to_matrix: tensor is not rank 2");
  MatX m(dim(0), dim(1));
  for (int i = 0; i < dim(0); ++i)
    for (int j = 0; j < dim(1); ++j) m(i, j) = static_cast<double>(impl_->value[i * dim(1) + j]);
  return m;
}

void Tape::backward(Tensor& out) {
  check(out.numel() == 1, "backward: output must be scalar");
  out.grad()[0] += static_cast<real_t>(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

// ---- broadcasting machinery ------------------------------------------------

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (size_t i = 0; i < r; ++i) {
    int da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    int db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    check(da == db || da == 1 || db == 1,
          std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Calls f(out_index, a_index, b_index) for every element of the broadcast
// result. Rank capped at 4.
template <class F>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, F&& f) {
  check(out.size() <= 4, "broadcast: rank > 4 not supported");
  int dims[4] = {1, 1, 1, 1};
  Eigen::Index sa[4] = {0, 0, 0, 0}, sb[4] = {0, 0, 0, 0};
  int r = static_cast<int>(out.size());
  int off = 4 - r;
  for (int i = 0; i < r; ++i) dims[off + i] = out[i];
  // Strides; 0 where the input broadcasts.
  Eigen::Index stride = 1;
  for (int i = static_cast<int>(a.size()) - 1; i >= 0; --i) {
    int pos = off + r - (static_cast<int>(a.size()) - i);
    sa[pos] = (a[i] == 1 && dims[pos] != 1) ? 0 : stride;
    stride *= a[i];
  }
  stride = 1;
  for (int i = static_cast<int>(b.size()) - 1; i >= 0; --i) {
    int pos = off + r - (static_cast<int>(b.size()) - i);
    sb[pos] = (b[i] == 1 && dims[pos] != 1) ? 0 : stride;
    stride *= b[i];
  }
  Eigen::Index oi = 0;
  for (int i0 = 0; i0 < dims[0]; ++i0)
    for (int i1 = 0; i1 < dims[1]; ++i1)
      for (int i2 = 0; i2 < dims[2]; ++i2) {
        Eigen::Index ai = i0 * sa[0] + i1 * sa[1] + i2 * sa[2];
        Eigen::Index bi = i0 * sb[0] + i1 * sb[1] + i2 * sb[2];
        for (int i3 = 0; i3 < dims[3]; ++i3, ++oi)
          f(oi, ai + i3 * sa[3], bi + i3 * sb[3]);
      }
}

enum class BinOp { add, sub, mul };

// b broadcasts as a contiguous trailing block of a (e.g. a (N, C) + b (C), or
// a (P, O, C) * b (1, 1, C)): the hot bias/coefficient pattern, handled with
// row-matrix views instead of the generic strided loop.
bool is_suffix_broadcast(const Shape& as, const Shape& bs) {
  Eigen::Index bn = shape_numel(bs);
  if (bn == shape_numel(as)) return false;  // equal-shape path handles that
  Eigen::Index trailing = 1;
  int i = static_cast<int>(as.size());
  while (i > 0 && trailing < bn) trailing *= as[--i];
  if (trailing != bn) return false;
  // b's shape, ignoring leading 1s, must equal as[i:] exactly.
  size_t bi = 0;
  while (bi < bs.size() && bs[bi] == 1) ++bi;
  size_t want = as.size() - i;
  if (bs.size() - bi != want) return bn == 1 && bi == bs.size();
  for (size_t d = 0; d < want; ++d)
    if (bs[bi + d] != as[i + d]) return false;
  return true;
}

Tensor binary_op(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  Tensor out;
  bool rg = track({a, b});
  if (as != bs && is_suffix_broadcast(as, bs)) {
    const Eigen::Index bn = shape_numel(bs);
    const Eigen::Index rows = shape_numel(as) / bn;
    ArrayX v(shape_numel(as));
    {
      MapConstMat ma(a.values().data(), rows, bn);
      Eigen::Map<const Eigen::Array<real_t, 1, Eigen::Dynamic>> vb(b.values().data(), bn);
      MapMat mo(v.data(), rows, bn);
      switch (op) {
        case BinOp::add: mo = ma.array().rowwise() + vb; break;
        case BinOp::sub: mo = ma.array().rowwise() - vb; break;
        case BinOp::mul: mo = ma.array().rowwise() * vb; break;
      }
    }
    out = make_output(as, std::move(v), rg);
    if (rg) {
      auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
      g_active_tape->record([ai, bi, oi, op, rows, bn]() {
        MapConstMat go(oi->ensure_grad().data(), rows, bn);
        if (ai->requires_grad) {
          MapMat ga(ai->ensure_grad().data(), rows, bn);
          if (op == BinOp::mul) {
            Eigen::Map<const Eigen::Array<real_t, 1, Eigen::Dynamic>> vb(bi->value.data(), bn);
            ga.array() += go.array().rowwise() * vb;
          } else {
            ga += go;
          }
        }
        if (bi->requires_grad) {
          Eigen::Map<Eigen::Matrix<real_t, 1, Eigen::Dynamic>> gb(bi->ensure_grad().data(), bn);
          if (op == BinOp::mul) {
            MapConstMat ma(ai->value.data(), rows, bn);
            gb += go.cwiseProduct(ma).colwise().sum();
          } else if (op == BinOp::sub) {
            gb -= go.colwise().sum();
          } else {
            gb += go.colwise().sum();
          }
        }
      });
    }
    return out;
  }
  if (as == bs) {
    ArrayX v;
    switch (op) {
      case BinOp::add: v = a.values() + b.values(); break;
      case BinOp::sub: v = a.values() - b.values(); break;
      case BinOp::mul: v = a.values() * b.values(); break;
    }
    out = make_output(as, std::move(v), rg);
  } else {
    Shape os = broadcast_shape(as, bs, name);
    ArrayX v(shape_numel(os));
    const ArrayX& av = a.values();
    const ArrayX& bv = b.values();
    switch (op) {
      case BinOp::add:
        for_each_broadcast(os, as, bs, [&](Eigen::Index o, Eigen::Index i, Eigen::Index j) {
          v[o] = av[i] + bv[j];
        });
        break;
      case BinOp::sub:
        for_each_broadcast(os, as, bs, [&](Eigen::Index o, Eigen::Index i, Eigen::Index j) {
          v[o] = av[i] - bv[j];
        });
        break;
      case BinOp::mul:
        for_each_broadcast(os, as, bs, [&](Eigen::Index o, Eigen::Index i, Eigen::Index j) {
          v[o] = av[i] * bv[j];
        });
        break;
    }
    out = make_output(std::move(os), std::move(v), rg);
  }
  if (rg) {
    auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
    g_active_tape->record([ai, bi, oi, op]() {
      const ArrayX& go = oi->ensure_grad();
      if (oi->shape == ai->shape && oi->shape == bi->shape) {
        if (ai->requires_grad) {
          ArrayX& ga = ai->ensure_grad();
          if (op == BinOp::mul) ga += go * bi->value;
          else ga += go;
        }
        if (bi->requires_grad) {
          ArrayX& gb = bi->ensure_grad();
          if (op == BinOp::mul) gb += go * ai->value;
          else if (op == BinOp::sub) gb -= go;
          else gb += go;
        }
        return;
      }
      if (ai->requires_grad) {
        ArrayX& ga = ai->ensure_grad();
        for_each_broadcast(oi->shape, ai->shape, bi->shape,
                           [&](Eigen::Index o, Eigen::Index i, Eigen::Index j) {
                             ga[i] += op == BinOp::mul ? go[o] * bi->value[j] : go[o];
                           });
      }
      if (bi->requires_grad) {
        ArrayX& gb = bi->ensure_grad();
        for_each_broadcast(oi->shape, ai->shape, bi->shape,
                           [&](Eigen::Index o, Eigen::Index i, Eigen::Index j) {
                             if (op == BinOp::mul) gb[j] += go[o] * ai->value[i];
                             else if (op == BinOp::sub) gb[j] -= go[o];
                             else gb[j] += go[o];
                           });
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::mul, "mul"); }

Tensor scale(const Tensor& a, real_t s) {
  bool rg = track({a});
  Tensor out = make_output(a.shape(), a.values() * s, rg);
  if (rg) {
    auto ai = a.impl_, oi = out.impl_;
    g_active_tape->record([ai, oi, s]() { ai->ensure_grad() += oi->ensure_grad() * s; });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2,
        "matmul: expects rank-2 tensors, got " + shape_str(a.shape()) + " and " +
            shape_str(b.shape()));
  check(a.dim(1) == b.dim(0), "matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                  " x " + shape_str(b.shape()));
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  bool rg = track({a, b});
  ArrayX v(static_cast<Eigen::Index>(n) * m);
  {
    MapConstMat ma(a.values().data(), n, k);
    MapConstMat mb(b.values().data(), k, m);
    MapMat mo(v.data(), n, m);
    mo.noalias() = ma * mb;
  }
  Tensor out = make_output({n, m}, std::move(v), rg);
  if (rg) {
    auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
    g_active_tape->record([ai, bi, oi, n, k, m]() {
      MapConstMat go(oi->ensure_grad().data(), n, m);
      if (ai->requires_grad) {
        MapConstMat mb(bi->value.data(), k, m);
        MapMat ga(ai->ensure_grad().data(), n, k);
        ga.noalias() += go * mb.transpose();
      }
      if (bi->requires_grad) {
        MapConstMat ma(ai->value.data(), n, k);
        MapMat gb(bi->ensure_grad().data(), k, m);
        gb.noalias() += ma.transpose() * go;
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  check(a.rank() == 2, "transpose: expects rank 2, got " + shape_str(a.shape()));
  const int n = a.dim(0), m = a.dim(1);
  bool rg = track({a});
  ArrayX v(a.numel());
  {
    MapConstMat ma(a.values().data(), n, m);
    MapMat mo(v.data(), m, n);
    mo = ma.transpose();
  }
  Tensor out = make_output({m, n}, std::move(v), rg);
  if (rg) {
    auto ai = a.impl_, oi = out.impl_;
    g_active_tape->record([ai, oi, n, m]() {
      MapConstMat go(oi->ensure_grad().data(), m, n);
      MapMat ga(ai->ensure_grad().data(), n, m);
      ga += go.transpose();
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
  check(x.rank() >= 1, "gather_rows: undefined input");
  const Eigen::Index row = x.numel() / x.dim(0);
  const int n = static_cast<int>(idx.size());
  bool rg = track({x});
  ArrayX v(n * row);
  for (int e = 0; e < n; ++e)
    v.segment(e * row, row) = x.values().segment(static_cast<Eigen::Index>(idx[e]) * row, row);
  Shape os = x.shape();
  os[0] = n;
  Tensor out = make_output(std::move(os), std::move(v), rg);
  if (rg) {
    auto xi = x.impl_, oi = out.impl_;
    g_active_tape->record([xi, oi, idx, row, n]() {
      ArrayX& gx = xi->ensure_grad();
      const ArrayX& go = oi->ensure_grad();
      for (int e = 0; e < n; ++e)
        gx.segment(static_cast<Eigen::Index>(idx[e]) * row, row) += go.segment(e * row, row);
    });
  }
  return out;
}

Tensor scatter_add(const Tensor& x, const std::vector<int>& idx, int n_rows) {
  check(x.rank() >= 1 && x.dim(0) == static_cast<int>(idx.size()),
        "scatter_add: index count must match rows, got " + shape_str(x.shape()));
  const Eigen::Index row = x.numel() / x.dim(0);
  const int n = x.dim(0);
  bool rg = track({x});
  ArrayX v = ArrayX::Zero(static_cast<Eigen::Index>(n_rows) * row);
  for (int e = 0; e < n; ++e)
    v.segment(static_cast<Eigen::Index>(idx[e]) * row, row) += x.values().segment(e * row, row);
  Shape os = x.shape();
  os[0] = n_rows;
  Tensor out = make_output(std::move(os), std::move(v), rg);
  if (rg) {
    auto xi = x.impl_, oi = out.impl_;
    g_active_tape->record([xi, oi, idx, row, n]() {
      ArrayX& gx = xi->ensure_grad();
      const ArrayX& go = oi->ensure_grad();
      for (int e = 0; e < n; ++e)
        gx.segment(e * row, row) += go.segment(static_cast<Eigen::Index>(idx[e]) * row, row);
    });
  }
  return out;
}

namespace {

Tensor reduce_axis(const Tensor& x, int axis, bool mean) {
  check(axis >= 0 && axis < x.rank(), "reduce: axis out of range");
  Eigen::Index outer, mid, inner;
  axis_split(x.shape(), axis, outer, mid, inner);
  bool rg = track({x});
  ArrayX v = ArrayX::Zero(outer * inner);
  const ArrayX& xv = x.values();
  for (Eigen::Index o = 0; o < outer; ++o)
    for (Eigen::Index m = 0; m < mid; ++m)
      v.segment(o * inner, inner) += xv.segment((o * mid + m) * inner, inner);
  real_t f = mean ? static_cast<real_t>(1.0 / mid) : static_cast<real_t>(1);
  if (mean) v *= f;
  Shape os;
  for (int i = 0; i < x.rank(); ++i)
    if (i != axis) os.push_back(x.dim(i));
  if (os.empty()) os.push_back(1);
  Tensor out = make_output(std::move(os), std::move(v), rg);
  if (rg) {
    auto xi = x.impl_, oi = out.impl_;
    g_active_tape->record([xi, oi, outer, mid, inner, f]() {
      ArrayX& gx = xi->ensure_grad();
      const ArrayX& go = oi->ensure_grad();
      for (Eigen::Index o = 0; o < outer; ++o)
        for (Eigen::Index m = 0; m < mid; ++m)
          gx.segment((o * mid + m) * inner, inner) += go.segment(o * inner, inner) * f;
    });
  }
  return out;
}

}  // namespace

Tensor reduce_sum(const Tensor& x, int axis) { return reduce_axis(x, axis, false); }
Tensor reduce_mean(const Tensor& x, int axis) { return reduce_axis(x, axis, true); }

Tensor sum_all(const Tensor& x) {
  bool rg = track({x});
  ArrayX v(1);
  v[0] = x.values().sum();
  Tensor out = make_output({1}, std::move(v), rg);
  if (rg) {
    auto xi = x.impl_, oi = out.impl_;
    g_active_tape->record([xi, oi]() { xi->ensure_grad() += oi->ensure_grad()[0]; });
  }
  return out;
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  Shape os = broadcast_shape(x.shape(), shape, "broadcast_to");
  check(os == shape, "broadcast_to: shape " + shape_str(x.shape()) +
                         " does not broadcast to " + shape_str(shape));
  bool rg = track({x});
  ArrayX v(shape_numel(os));
  const ArrayX& xv = x.values();
  for_each_broadcast(os, x.shape(), os,
                     [&](Eigen::Index o, Eigen::Index i, Eigen::Index) { v[o] = xv[i]; });
  Tensor out = make_output(os, std::move(v), rg);
  if (rg) {
    auto xi = x.impl_, oi = out.impl_;
    g_active_tape->record([xi, oi]() {
      ArrayX& gx = xi->ensure_grad();
      const ArrayX& go = oi->ensure_grad();
      for_each_broadcast(oi->shape, xi->shape, oi->shape,
                         [&](Eigen::Index o, Eigen::Index i, Eigen::Index) { gx[i] += go[o]; });
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  check(shape_numel(shape) == x.numel(), "reshape: element count mismatch, " +
                                             shape_str(x.shape()) + " to " + shape_str(shape));
  bool rg = track({x});
  Tensor out = make_output(std::move(shape), x.values(), rg);
  if (rg) {
    auto xi = x.impl_, oi = out.impl_;
    g_active_tape->record([xi, oi]() { xi->ensure_grad() += oi->ensure_grad(); });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  check(!xs.empty(), "concat: no inputs");
  const Tensor& first = xs[0];
  check(axis >= 0 && axis < first.rank(), "concat: axis out of range");
  int total = 0;
  for (const Tensor& t : xs) {
    check(t.rank() == first.rank(), "concat: rank mismatch");
    for (int i = 0; i < t.rank(); ++i)
      if (i != axis)
        check(t.dim(i) == first.dim(i), "concat: shape mismatch at axis " + std::to_string(i));
    total += t.dim(axis);
  }
  Shape os = first.shape();
  os[axis] = total;
  Eigen::Index outer, mid, inner;
  axis_split(os, axis, outer, mid, inner);
  bool rg = false;
  for (const Tensor& t : xs) rg |= g_active_tape && t.requires_grad();
  ArrayX v(shape_numel(os));
  Eigen::Index at = 0;
  for (const Tensor& t : xs) {
    Eigen::Index tm = t.dim(axis);
    for (Eigen::Index o = 0; o < outer; ++o)
      v.segment((o * mid + at) * inner, tm * inner) =
          t.values().segment(o * tm * inner, tm * inner);
    at += tm;
  }
  Tensor out = make_output(std::move(os), std::move(v), rg);
  if (rg) {
    std::vector<std::shared_ptr<detail::TensorImpl>> impls;
    for (const Tensor& t : xs) impls.push_back(t.impl_);
    auto oi = out.impl_;
    g_active_tape->record([impls, oi, outer, mid, inner]() {
      const ArrayX& go = oi->ensure_grad();
      Eigen::Index at = 0;
      for (auto& xi : impls) {
        Eigen::Index tm = xi->value.size() / (outer * inner);
        if (xi->requires_grad) {
          ArrayX& gx = xi->ensure_grad();
          for (Eigen::Index o = 0; o < outer; ++o)
            gx.segment(o * tm * inner, tm * inner) +=
                go.segment((o * mid + at) * inner, tm * inner);
        }
        at += tm;
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
  check(axis >= 0 && axis < x.rank(), "slice: axis out of range");
  check(start >= 0 && len >= 0 && start + len <= x.dim(axis), "slice: range out of bounds");
  Eigen::Index outer, mid, inner;
  axis_split(x.shape(), axis, outer, mid, inner);
  bool rg = track({x});
  Shape os = x.shape();
  os[axis] = len;
  ArrayX v(shape_numel(os));
  for (Eigen::Index o = 0; o < outer; ++o)
    v.segment(o * len * inner, len * inner) =
        x.values().segment((o * mid + start) * inner, len * inner);
  Tensor out = make_output(std::move(os), std::move(v), rg);
  if (rg) {
    auto xi = x.impl_, oi = out.impl_;
    g_active_tape->record([xi, oi, outer, mid, inner, start, len]() {
      ArrayX& gx = xi->ensure_grad();
      const ArrayX& go = oi->ensure_grad();
      for (Eigen::Index o = 0; o < outer; ++o)
        gx.segment((o * mid + start) * inner, len * inner) +=
            go.segment(o * len * inner, len * inner);
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  bool rg = track({x});
  const ArrayX& xv = x.values();
  ArrayX v(xv.size());
  for (Eigen::Index i = 0; i < xv.size(); ++i) {
    double z = static_cast<double>(xv[i]);
    v[i] = static_cast<real_t>(0.5 * z * (1.0 + std::erf(z * M_SQRT1_2)));
  }
  Tensor out = make_output(x.shape(), std::move(v), rg);
  if (rg) {
    auto xi = x.impl_, oi = out.impl_;
    g_active_tape->record([xi, oi]() {
      ArrayX& gx = xi->ensure_grad();
      const ArrayX& go = oi->ensure_grad();
      const ArrayX& xv = xi->value;
      for (Eigen::Index i = 0; i < xv.size(); ++i) {
        double z = static_cast<double>(xv[i]);
        double cdf = 0.5 * (1.0 + std::erf(z * M_SQRT1_2));
        double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
        gx[i] += go[i] * static_cast<real_t>(cdf + z * pdf);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, real_t eps) {
  check(x.rank() >= 1, "layer_norm: undefined input");
  const Eigen::Index c = x.dim(x.rank() - 1);
  const Eigen::Index rows = x.numel() / c;
  bool rg = track({x});
  ArrayX v(x.numel());
  Eigen::Array<real_t, Eigen::Dynamic, 1> inv(rows);
  {
    MapConstMat mx(x.values().data(), rows, c);
    MapMat mo(v.data(), rows, c);
    Eigen::Array<real_t, Eigen::Dynamic, 1> mu = mx.array().rowwise().mean();
    mo = mx.array().colwise() - mu;
    inv = (mo.array().square().rowwise().mean() + eps).rsqrt();
    mo.array().colwise() *= inv;
  }
  Tensor out = make_output(x.shape(), std::move(v), rg);
  if (rg) {
    auto xi = x.impl_, oi = out.impl_;
    g_active_tape->record([xi, oi, rows, c, inv]() {
      MapMat gx(xi->ensure_grad().data(), rows, c);
      MapConstMat go(oi->ensure_grad().data(), rows, c);
      MapConstMat y(oi->value.data(), rows, c);  // normalized values
      Eigen::Array<real_t, Eigen::Dynamic, 1> gmean = go.array().rowwise().mean();
      Eigen::Array<real_t, Eigen::Dynamic, 1> gy =
          (go.array() * y.array()).rowwise().mean();
      gx.array() += ((go.array().colwise() - gmean) - (y.array().colwise() * gy)).colwise() * inv;
    });
  }
  return out;
}

Tensor power(const Tensor& x, int exponent) {
  check(exponent >= 0 && exponent <= 2, "power: integer exponent must be in {0, 1, 2}");
  bool rg = track({x});
  ArrayX v;
  switch (exponent) {
    case 0: v = ArrayX::Ones(x.numel()); break;
    case 1: v = x.values(); break;
    default: v = x.values().square(); break;
  }
  Tensor out = make_output(x.shape(), std::move(v), rg);
  if (rg && exponent > 0) {
    auto xi = x.impl_, oi = out.impl_;
    g_active_tape->record([xi, oi, exponent]() {
      ArrayX& gx = xi->ensure_grad();
      const ArrayX& go = oi->ensure_grad();
      if (exponent == 1) gx += go;
      else gx += go * 2 * xi->value;
    });
  }
  return out;
}

Tensor log_softmax(const Tensor& x) {
  check(x.rank() >= 1, "log_softmax: undefined input");
  const Eigen::Index c = x.dim(x.rank() - 1);
  const Eigen::Index rows = x.numel() / c;
  bool rg = track({x});
  ArrayX v(x.numel());
  const ArrayX& xv = x.values();
  for (Eigen::Index r = 0; r < rows; ++r) {
    auto seg = xv.segment(r * c, c);
    real_t mx = seg.maxCoeff();
    real_t lse = std::log((seg - mx).exp().sum()) + mx;
    v.segment(r * c, c) = seg - lse;
  }
  Tensor out = make_output(x.shape(), std::move(v), rg);
  if (rg) {
    auto xi = x.impl_, oi = out.impl_;
    g_active_tape->record([xi, oi, rows, c]() {
      ArrayX& gx = xi->ensure_grad();
      const ArrayX& go = oi->ensure_grad();
      const ArrayX& y = oi->value;
      for (Eigen::Index r = 0; r < rows; ++r) {
        auto gseg = go.segment(r * c, c);
        real_t gsum = gseg.sum();
        gx.segment(r * c, c) += gseg - y.segment(r * c, c).exp() * gsum;
      }
    });
  }
  return out;
}

Tensor nll_loss(const Tensor& logp, const std::vector<int>& labels) {
  check(logp.rank() == 2, "nll_loss: logp must be rank 2");
  const int n = logp.dim(0), k = logp.dim(1);
  check(static_cast<int>(labels.size()) == n, "nll_loss: label count mismatch");
  bool rg = track({logp});
  real_t total = 0;
  for (int i = 0; i < n; ++i) {
    check(labels[i] >= 0 && labels[i] < k, "nll_loss: label out of range");
    total -= logp.values()[static_cast<Eigen::Index>(i) * k + labels[i]];
  }
  ArrayX v(1);
  v[0] = total / n;
  Tensor out = make_output({1}, std::move(v), rg);
  if (rg) {
    auto xi = logp.impl_, oi = out.impl_;
    g_active_tape->record([xi, oi, labels, n, k]() {
      ArrayX& gx = xi->ensure_grad();
      real_t g = oi->ensure_grad()[0] / n;
      for (int i = 0; i < n; ++i) gx[static_cast<Eigen::Index>(i) * k + labels[i]] -= g;
    });
  }
  return out;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  check(pred.shape() == target.shape(), "mse_loss: shape mismatch " + shape_str(pred.shape()) +
                                            " vs " + shape_str(target.shape()));
  Tensor d = sub(pred, target);
  return scale(sum_all(power(d, 2)), static_cast<real_t>(1.0 / pred.numel()));
}

Tensor fiber_matmul(const Tensor& x, const MatX& a) {
  check(x.rank() == 3, "fiber_matmul: expects (P, O, C), got " + shape_str(x.shape()));
  const int p = x.dim(0), o = x.dim(1), c = x.dim(2);
  check(a.cols() == o, "fiber_matmul: operator columns must equal fiber size");
  const int oo = static_cast<int>(a.rows());
  bool rg = track({x});
  RowMat ar = a.cast<real_t>();
  ArrayX v(static_cast<Eigen::Index>(p) * oo * c);
  for (int i = 0; i < p; ++i) {
    MapConstMat xi(x.values().data() + static_cast<Eigen::Index>(i) * o * c, o, c);
    MapMat vo(v.data() + static_cast<Eigen::Index>(i) * oo * c, oo, c);
    vo.noalias() = ar * xi;
  }
  Tensor out = make_output({p, oo, c}, std::move(v), rg);
  if (rg) {
    auto xi = x.impl_, oi = out.impl_;
    g_active_tape->record([xi, oi, ar, p, o, c, oo]() {
      ArrayX& gx = xi->ensure_grad();
      const ArrayX& go = oi->ensure_grad();
      RowMat art = ar.transpose();
      for (int i = 0; i < p; ++i) {
        MapConstMat gig(go.data() + static_cast<Eigen::Index>(i) * oo * c, oo, c);
        MapMat gxi(gx.data() + static_cast<Eigen::Index>(i) * o * c, o, c);
        gxi.noalias() += art * gig;
      }
    });
  }
  return out;
}

}  // namespace rapidash
