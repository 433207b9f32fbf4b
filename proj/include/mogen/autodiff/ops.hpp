#pragma once

// Operator set for the autodiff tape. Each op validates shapes up front
// (naming itself in the error), computes the forward value through the
// kernel layer, and registers a closure that accumulates gradients into
// its parents.

#include <cmath>
#include <cstring>

#include "mogen/autodiff/tensor.hpp"
#include "mogen/kernels/kernels.hpp"

namespace mogen::ad {

namespace detail {

template <typename T>
const kern::KernelTable<T>& kt() {
  return kern::table<T>();
}

inline int last_dim(const Shape& s) { return s.back(); }

inline std::int64_t rows_of(const Shape& s) {
  std::int64_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

template <typename T>
void check_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------- binary

enum class Broadcast { same, row, scalar };

template <typename T>
Broadcast broadcast_mode(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a.shape() == b.shape()) return Broadcast::same;
  if (b.numel() == 1) return Broadcast::scalar;
  if (b.ndim() == 1 && b.dim(0) == detail::last_dim(a.shape()))
    return Broadcast::row;
  throw std::invalid_argument(std::string(op) + ": cannot broadcast " +
                              shape_str(b.shape()) + " onto " +
                              shape_str(a.shape()));
}

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  const Broadcast mode = broadcast_mode("add", a, b);
  auto out = tape.make(a.shape(), a.requires_grad() || b.requires_grad());
  const auto& k = detail::kt<T>();
  const auto n = static_cast<std::size_t>(a.numel());
  if (mode == Broadcast::same) {
    k.add(a.val().data(), b.val().data(), out.val().data(), n);
  } else if (mode == Broadcast::scalar) {
    const T bv = b.val()[0];
    for (std::size_t i = 0; i < n; ++i) out.val()[i] = a.val()[i] + bv;
  } else {
    const int d = detail::last_dim(a.shape());
    const std::int64_t rows = detail::rows_of(a.shape());
    for (std::int64_t r = 0; r < rows; ++r)
      k.add(a.val().data() + r * d, b.val().data(),
            out.val().data() + r * d, static_cast<std::size_t>(d));
  }
  if (!out.requires_grad()) return out;
  auto an = a.node(), bn = b.node();
  Node<T>* on = out.node().get();
  on->backprop = [an, bn, on, mode]() {
    const auto& kk = detail::kt<T>();
    const auto nn = on->val.size();
    if (an->requires_grad) kk.axpy(T(1), on->grad.data(), an->grad.data(), nn);
    if (bn->requires_grad) {
      if (mode == Broadcast::same) {
        kk.axpy(T(1), on->grad.data(), bn->grad.data(), nn);
      } else if (mode == Broadcast::scalar) {
        bn->grad[0] += kk.sum(on->grad.data(), nn);
      } else {
        const auto d = bn->val.size();
        for (std::size_t off = 0; off < nn; off += d)
          kk.axpy(T(1), on->grad.data() + off, bn->grad.data(), d);
      }
    }
  };
  return out;
}

template <typename T>
Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  const Broadcast mode = broadcast_mode("mul", a, b);
  auto out = tape.make(a.shape(), a.requires_grad() || b.requires_grad());
  const auto& k = detail::kt<T>();
  const auto n = static_cast<std::size_t>(a.numel());
  if (mode == Broadcast::same) {
    k.mul(a.val().data(), b.val().data(), out.val().data(), n);
  } else if (mode == Broadcast::scalar) {
    k.scale(b.val()[0], a.val().data(), out.val().data(), n);
  } else {
    const int d = detail::last_dim(a.shape());
    const std::int64_t rows = detail::rows_of(a.shape());
    for (std::int64_t r = 0; r < rows; ++r)
      k.mul(a.val().data() + r * d, b.val().data(),
            out.val().data() + r * d, static_cast<std::size_t>(d));
  }
  if (!out.requires_grad()) return out;
  auto an = a.node(), bn = b.node();
  Node<T>* on = out.node().get();
  on->backprop = [an, bn, on, mode]() {
    const auto& kk = detail::kt<T>();
    const auto nn = on->val.size();
    if (an->requires_grad) {
      if (mode == Broadcast::same) {
        for (std::size_t i = 0; i < nn; ++i)
          an->grad[i] += on->grad[i] * bn->val[i];
      } else if (mode == Broadcast::scalar) {
        kk.axpy(bn->val[0], on->grad.data(), an->grad.data(), nn);
      } else {
        const auto d = bn->val.size();
        for (std::size_t off = 0; off < nn; off += d)
          for (std::size_t i = 0; i < d; ++i)
            an->grad[off + i] += on->grad[off + i] * bn->val[i];
      }
    }
    if (bn->requires_grad) {
      if (mode == Broadcast::same) {
        for (std::size_t i = 0; i < nn; ++i)
          bn->grad[i] += on->grad[i] * an->val[i];
      } else if (mode == Broadcast::scalar) {
        bn->grad[0] += kk.dot(on->grad.data(), an->val.data(), nn);
      } else {
        const auto d = bn->val.size();
        for (std::size_t off = 0; off < nn; off += d)
          for (std::size_t i = 0; i < d; ++i)
            bn->grad[i] += on->grad[off + i] * an->val[off + i];
      }
    }
  };
  return out;
}

template <typename T>
Var<T> sub(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape("sub", a, b);
  auto out = tape.make(a.shape(), a.requires_grad() || b.requires_grad());
  detail::kt<T>().sub(a.val().data(), b.val().data(), out.val().data(),
                      static_cast<std::size_t>(a.numel()));
  if (!out.requires_grad()) return out;
  auto an = a.node(), bn = b.node();
  Node<T>* on = out.node().get();
  on->backprop = [an, bn, on]() {
    const auto& kk = detail::kt<T>();
    const auto nn = on->val.size();
    if (an->requires_grad) kk.axpy(T(1), on->grad.data(), an->grad.data(), nn);
    if (bn->requires_grad) kk.axpy(T(-1), on->grad.data(), bn->grad.data(), nn);
  };
  return out;
}

template <typename T>
Var<T> scale(Tape<T>& tape, const Var<T>& a, T c) {
  auto out = tape.make(a.shape(), a.requires_grad());
  detail::kt<T>().scale(c, a.val().data(), out.val().data(),
                        static_cast<std::size_t>(a.numel()));
  if (!out.requires_grad()) return out;
  auto an = a.node();
  Node<T>* on = out.node().get();
  on->backprop = [an, on, c]() {
    detail::kt<T>().axpy(c, on->grad.data(), an->grad.data(), on->val.size());
  };
  return out;
}

template <typename T>
Var<T> sqdiff(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape("squared-difference", a, b);
  auto out = tape.make(a.shape(), a.requires_grad() || b.requires_grad());
  detail::kt<T>().sqdiff(a.val().data(), b.val().data(), out.val().data(),
                         static_cast<std::size_t>(a.numel()));
  if (!out.requires_grad()) return out;
  auto an = a.node(), bn = b.node();
  Node<T>* on = out.node().get();
  on->backprop = [an, bn, on]() {
    const auto nn = on->val.size();
    for (std::size_t i = 0; i < nn; ++i) {
      const T d = T(2) * (an->val[i] - bn->val[i]) * on->grad[i];
      if (an->requires_grad) an->grad[i] += d;
      if (bn->requires_grad) bn->grad[i] -= d;
    }
  };
  return out;
}

// ---------------------------------------------------------------- matmul

template <typename T>
Var<T> matmul(Tape<T>& tape, const Var<T>& a, const Var<T>& b,
              bool trans_a = false, bool trans_b = false) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw std::invalid_argument("matmul: expects 2-D operands, got " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const int m = trans_a ? a.dim(1) : a.dim(0);
  const int ka = trans_a ? a.dim(0) : a.dim(1);
  const int kb = trans_b ? b.dim(1) : b.dim(0);
  const int n = trans_b ? b.dim(0) : b.dim(1);
  if (ka != kb)
    throw std::invalid_argument("matmul: inner dimension mismatch " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  auto out = tape.make({m, n}, a.requires_grad() || b.requires_grad());
  detail::kt<T>().matmul(a.val().data(), b.val().data(), out.val().data(), m,
                         n, ka, trans_a, trans_b);
  if (!out.requires_grad()) return out;
  auto an = a.node(), bn = b.node();
  Node<T>* on = out.node().get();
  on->backprop = [an, bn, on, m, n, ka, trans_a, trans_b]() {
    const auto& kk = detail::kt<T>();
    std::vector<T> tmp;
    if (an->requires_grad) {
      tmp.assign(an->val.size(), T(0));
      if (!trans_a && !trans_b)       // dA = dC B^T
        kk.matmul(on->grad.data(), bn->val.data(), tmp.data(), m, ka, n, false, true);
      else if (!trans_a && trans_b)   // dA = dC B
        kk.matmul(on->grad.data(), bn->val.data(), tmp.data(), m, ka, n, false, false);
      else if (trans_a && !trans_b)   // dA = B dC^T
        kk.matmul(bn->val.data(), on->grad.data(), tmp.data(), ka, m, n, false, true);
      else                            // dA = B^T dC^T
        kk.matmul(bn->val.data(), on->grad.data(), tmp.data(), ka, m, n, true, true);
      kk.axpy(T(1), tmp.data(), an->grad.data(), an->grad.size());
    }
    if (bn->requires_grad) {
      tmp.assign(bn->val.size(), T(0));
      if (!trans_a && !trans_b)       // dB = A^T dC
        kk.matmul(an->val.data(), on->grad.data(), tmp.data(), ka, n, m, true, false);
      else if (!trans_a && trans_b)   // dB = dC^T A
        kk.matmul(on->grad.data(), an->val.data(), tmp.data(), n, ka, m, true, false);
      else if (trans_a && !trans_b)   // dB = A dC
        kk.matmul(an->val.data(), on->grad.data(), tmp.data(), ka, n, m, false, false);
      else                            // dB = dC^T A^T
        kk.matmul(on->grad.data(), an->val.data(), tmp.data(), n, ka, m, true, true);
      kk.axpy(T(1), tmp.data(), bn->grad.data(), bn->grad.size());
    }
  };
  return out;
}

// Batched matmul over a shared leading dimension: a [B,m,k], b [B,k,n]
// ([B,n,k] when trans_b).
template <typename T>
Var<T> bmm(Tape<T>& tape, const Var<T>& a, const Var<T>& b,
           bool trans_b = false) {
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0))
    throw std::invalid_argument("bmm: expects 3-D operands with equal batch, got " +
                                shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int batch = a.dim(0), m = a.dim(1), ka = a.dim(2);
  const int kb = trans_b ? b.dim(2) : b.dim(1);
  const int n = trans_b ? b.dim(1) : b.dim(2);
  if (ka != kb)
    throw std::invalid_argument("bmm: inner dimension mismatch " +
                                shape_str(a.shape()) + " x " + shape_str(b.shape()));
  auto out = tape.make({batch, m, n}, a.requires_grad() || b.requires_grad());
  const auto& k = detail::kt<T>();
  const std::size_t sa = static_cast<std::size_t>(m) * ka;
  const std::size_t sb = static_cast<std::size_t>(b.dim(1)) * b.dim(2);
  const std::size_t so = static_cast<std::size_t>(m) * n;
  for (int i = 0; i < batch; ++i)
    k.matmul(a.val().data() + i * sa, b.val().data() + i * sb,
             out.val().data() + i * so, m, n, ka, false, trans_b);
  if (!out.requires_grad()) return out;
  auto an = a.node(), bn = b.node();
  Node<T>* on = out.node().get();
  on->backprop = [an, bn, on, batch, m, n, ka, sa, sb, so, trans_b]() {
    const auto& kk = detail::kt<T>();
    std::vector<T> tmp;
    for (int i = 0; i < batch; ++i) {
      const T* go = on->grad.data() + i * so;
      if (an->requires_grad) {
        tmp.assign(sa, T(0));
        if (!trans_b)
          kk.matmul(go, bn->val.data() + i * sb, tmp.data(), m, ka, n, false, true);
        else
          kk.matmul(go, bn->val.data() + i * sb, tmp.data(), m, ka, n, false, false);
        kk.axpy(T(1), tmp.data(), an->grad.data() + i * sa, sa);
      }
      if (bn->requires_grad) {
        tmp.assign(sb, T(0));
        if (!trans_b)
          kk.matmul(an->val.data() + i * sa, go, tmp.data(), ka, n, m, true, false);
        else
          kk.matmul(go, an->val.data() + i * sa, tmp.data(), n, ka, m, true, false);
        kk.axpy(T(1), tmp.data(), bn->grad.data() + i * sb, sb);
      }
    }
  };
  return out;
}

// ------------------------------------------------------------ activations

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& x) {
  auto out = tape.make(x.shape(), x.requires_grad());
  detail::kt<T>().relu(x.val().data(), out.val().data(),
                       static_cast<std::size_t>(x.numel()));
  if (!out.requires_grad()) return out;
  auto xn = x.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, on]() {
    detail::kt<T>().relu_grad(xn->val.data(), on->grad.data(), xn->grad.data(),
                              on->val.size());
  };
  return out;
}

template <typename T>
Var<T> gelu(Tape<T>& tape, const Var<T>& x) {
  auto out = tape.make(x.shape(), x.requires_grad());
  detail::kt<T>().gelu(x.val().data(), out.val().data(),
                       static_cast<std::size_t>(x.numel()));
  if (!out.requires_grad()) return out;
  auto xn = x.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, on]() {
    detail::kt<T>().gelu_grad(xn->val.data(), on->grad.data(), xn->grad.data(),
                              on->val.size());
  };
  return out;
}

template <typename T>
Var<T> vexp(Tape<T>& tape, const Var<T>& x) {
  auto out = tape.make(x.shape(), x.requires_grad());
  detail::kt<T>().exp(x.val().data(), out.val().data(),
                      static_cast<std::size_t>(x.numel()));
  if (!out.requires_grad()) return out;
  auto xn = x.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, on]() {
    for (std::size_t i = 0; i < on->val.size(); ++i)
      xn->grad[i] += on->grad[i] * on->val[i];
  };
  return out;
}

// Domain x >= 0 (gradient defined for x > 0).
template <typename T>
Var<T> vsqrt(Tape<T>& tape, const Var<T>& x) {
  auto out = tape.make(x.shape(), x.requires_grad());
  for (std::int64_t i = 0; i < x.numel(); ++i)
    out.val()[static_cast<std::size_t>(i)] =
        std::sqrt(x.val()[static_cast<std::size_t>(i)]);
  if (!out.requires_grad()) return out;
  auto xn = x.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, on]() {
    for (std::size_t i = 0; i < on->val.size(); ++i)
      xn->grad[i] += on->grad[i] * T(0.5) / on->val[i];
  };
  return out;
}

// Domain x > 0.
template <typename T>
Var<T> vlog(Tape<T>& tape, const Var<T>& x) {
  auto out = tape.make(x.shape(), x.requires_grad());
  detail::kt<T>().log(x.val().data(), out.val().data(),
                      static_cast<std::size_t>(x.numel()));
  if (!out.requires_grad()) return out;
  auto xn = x.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, on]() {
    for (std::size_t i = 0; i < on->val.size(); ++i)
      xn->grad[i] += on->grad[i] / xn->val[i];
  };
  return out;
}

// -------------------------------------------------------- normalizations

template <typename T>
Var<T> softmax(Tape<T>& tape, const Var<T>& x) {
  auto out = tape.make(x.shape(), x.requires_grad());
  const int d = detail::last_dim(x.shape());
  const std::int64_t rows = detail::rows_of(x.shape());
  const auto& k = detail::kt<T>();
  for (std::int64_t r = 0; r < rows; ++r)
    k.softmax_row(x.val().data() + r * d, out.val().data() + r * d, d);
  if (!out.requires_grad()) return out;
  auto xn = x.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, on, d, rows]() {
    const auto& kk = detail::kt<T>();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* y = on->val.data() + r * d;
      const T* gy = on->grad.data() + r * d;
      T* gx = xn->grad.data() + r * d;
      const T s = kk.dot(gy, y, static_cast<std::size_t>(d));
      for (int i = 0; i < d; ++i) gx[i] += y[i] * (gy[i] - s);
    }
  };
  return out;
}

template <typename T>
Var<T> log_softmax(Tape<T>& tape, const Var<T>& x) {
  auto out = tape.make(x.shape(), x.requires_grad());
  const int d = detail::last_dim(x.shape());
  const std::int64_t rows = detail::rows_of(x.shape());
  const auto& k = detail::kt<T>();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xi = x.val().data() + r * d;
    T* yi = out.val().data() + r * d;
    const T m = k.max(xi, static_cast<std::size_t>(d));
    T denom = T(0);
    for (int i = 0; i < d; ++i) denom += std::exp(xi[i] - m);
    const T lse = m + std::log(denom);
    for (int i = 0; i < d; ++i) yi[i] = xi[i] - lse;
  }
  if (!out.requires_grad()) return out;
  auto xn = x.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, on, d, rows]() {
    const auto& kk = detail::kt<T>();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* y = on->val.data() + r * d;
      const T* gy = on->grad.data() + r * d;
      T* gx = xn->grad.data() + r * d;
      const T s = kk.sum(gy, static_cast<std::size_t>(d));
      for (int i = 0; i < d; ++i) gx[i] += gy[i] - std::exp(y[i]) * s;
    }
  };
  return out;
}

// Rows are normalized over the last dimension; gamma/beta have that length.
template <typename T>
Var<T> layer_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma,
                  const Var<T>& beta, T eps) {
  const int d = detail::last_dim(x.shape());
  if (gamma.numel() != d || beta.numel() != d)
    throw std::invalid_argument("layer-norm: affine size mismatch with " +
                                shape_str(x.shape()));
  const std::int64_t rows = detail::rows_of(x.shape());
  auto out = tape.make(x.shape(), x.requires_grad() || gamma.requires_grad() ||
                                      beta.requires_grad());
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  const auto& k = detail::kt<T>();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xi = x.val().data() + r * d;
    const T mean = k.sum(xi, static_cast<std::size_t>(d)) / T(d);
    T var = T(0);
    for (int i = 0; i < d; ++i) {
      const T c = xi[i] - mean;
      var += c * c;
    }
    var /= T(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(r)] = is;
    T* xh = xhat->data() + r * d;
    T* yi = out.val().data() + r * d;
    for (int i = 0; i < d; ++i) {
      xh[i] = (xi[i] - mean) * is;
      yi[i] = gamma.val()[static_cast<std::size_t>(i)] * xh[i] +
              beta.val()[static_cast<std::size_t>(i)];
    }
  }
  if (!out.requires_grad()) return out;
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, gn, bn, on, xhat, inv_std, d, rows]() {
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* gy = on->grad.data() + r * d;
      const T* xh = xhat->data() + r * d;
      if (gn->requires_grad || bn->requires_grad) {
        for (int i = 0; i < d; ++i) {
          if (gn->requires_grad) gn->grad[static_cast<std::size_t>(i)] += gy[i] * xh[i];
          if (bn->requires_grad) bn->grad[static_cast<std::size_t>(i)] += gy[i];
        }
      }
      if (xn->requires_grad) {
        const T is = (*inv_std)[static_cast<std::size_t>(r)];
        T sum_g = T(0), sum_gx = T(0);
        for (int i = 0; i < d; ++i) {
          const T g = gy[i] * gn->val[static_cast<std::size_t>(i)];
          sum_g += g;
          sum_gx += g * xh[i];
        }
        const T inv_d = T(1) / T(d);
        T* gx = xn->grad.data() + r * d;
        for (int i = 0; i < d; ++i) {
          const T g = gy[i] * gn->val[static_cast<std::size_t>(i)];
          gx[i] += is * (g - inv_d * sum_g - xh[i] * inv_d * sum_gx);
        }
      }
    }
  };
  return out;
}

// ----------------------------------------------------- indexing/shaping

template <typename T>
Var<T> embedding(Tape<T>& tape, const Var<T>& table,
                 const std::vector<int>& ids) {
  if (table.ndim() != 2)
    throw std::invalid_argument("embedding-lookup: table must be 2-D");
  const int v = table.dim(0), d = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= v)
      throw std::invalid_argument("embedding-lookup: id " + std::to_string(id) +
                                  " out of range [0," + std::to_string(v) + ")");
  auto out = tape.make({static_cast<int>(ids.size()), d}, table.requires_grad());
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::memcpy(out.val().data() + i * d,
                table.val().data() + static_cast<std::size_t>(ids[i]) * d,
                sizeof(T) * static_cast<std::size_t>(d));
  if (!out.requires_grad()) return out;
  auto tn = table.node();
  Node<T>* on = out.node().get();
  on->backprop = [tn, on, ids, d]() {
    const auto& kk = detail::kt<T>();
    for (std::size_t i = 0; i < ids.size(); ++i)
      kk.axpy(T(1), on->grad.data() + i * d,
              tn->grad.data() + static_cast<std::size_t>(ids[i]) * d,
              static_cast<std::size_t>(d));
  };
  return out;
}

template <typename T>
Var<T> gather_rows(Tape<T>& tape, const Var<T>& x, const std::vector<int>& idx) {
  if (x.ndim() != 2) throw std::invalid_argument("gather: rows mode expects 2-D");
  const int r = x.dim(0), c = x.dim(1);
  for (int i : idx)
    if (i < 0 || i >= r)
      throw std::invalid_argument("gather: row index out of range");
  auto out = tape.make({static_cast<int>(idx.size()), c}, x.requires_grad());
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::memcpy(out.val().data() + i * c,
                x.val().data() + static_cast<std::size_t>(idx[i]) * c,
                sizeof(T) * static_cast<std::size_t>(c));
  if (!out.requires_grad()) return out;
  auto xn = x.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, on, idx, c]() {
    const auto& kk = detail::kt<T>();
    for (std::size_t i = 0; i < idx.size(); ++i)
      kk.axpy(T(1), on->grad.data() + i * c,
              xn->grad.data() + static_cast<std::size_t>(idx[i]) * c,
              static_cast<std::size_t>(c));
  };
  return out;
}

template <typename T>
Var<T> gather_cols(Tape<T>& tape, const Var<T>& x, const std::vector<int>& idx) {
  if (x.ndim() != 2) throw std::invalid_argument("gather: cols mode expects 2-D");
  const int r = x.dim(0), c = x.dim(1);
  for (int i : idx)
    if (i < 0 || i >= c)
      throw std::invalid_argument("gather: column index out of range");
  const int nc = static_cast<int>(idx.size());
  auto out = tape.make({r, nc}, x.requires_grad());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < nc; ++j)
      out.val()[static_cast<std::size_t>(i) * nc + j] =
          x.val()[static_cast<std::size_t>(i) * c + idx[static_cast<std::size_t>(j)]];
  if (!out.requires_grad()) return out;
  auto xn = x.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, on, idx, r, c, nc]() {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < nc; ++j)
        xn->grad[static_cast<std::size_t>(i) * c + idx[static_cast<std::size_t>(j)]] +=
            on->grad[static_cast<std::size_t>(i) * nc + j];
  };
  return out;
}

// out[i] = x[i, cols[i]]
template <typename T>
Var<T> take_per_row(Tape<T>& tape, const Var<T>& x, const std::vector<int>& cols) {
  if (x.ndim() != 2) throw std::invalid_argument("gather: per-row mode expects 2-D");
  const int r = x.dim(0), c = x.dim(1);
  if (static_cast<int>(cols.size()) != r)
    throw std::invalid_argument("gather: need one column index per row");
  for (int i : cols)
    if (i < 0 || i >= c)
      throw std::invalid_argument("gather: column index out of range");
  auto out = tape.make({r}, x.requires_grad());
  for (int i = 0; i < r; ++i)
    out.val()[static_cast<std::size_t>(i)] =
        x.val()[static_cast<std::size_t>(i) * c + cols[static_cast<std::size_t>(i)]];
  if (!out.requires_grad()) return out;
  auto xn = x.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, on, cols, c]() {
    for (std::size_t i = 0; i < cols.size(); ++i)
      xn->grad[i * c + cols[i]] += on->grad[i];
  };
  return out;
}

template <typename T>
Var<T> reshape(Tape<T>& tape, const Var<T>& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw std::invalid_argument("reshape: element count mismatch " +
                                shape_str(x.shape()) + " -> " + shape_str(shape));
  auto out = tape.make(std::move(shape), x.requires_grad());
  out.val() = x.val();
  if (!out.requires_grad()) return out;
  auto xn = x.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, on]() {
    detail::kt<T>().axpy(T(1), on->grad.data(), xn->grad.data(), on->val.size());
  };
  return out;
}

template <typename T>
Var<T> transpose(Tape<T>& tape, const Var<T>& x) {
  if (x.ndim() != 2) throw std::invalid_argument("transpose: expects 2-D");
  const int r = x.dim(0), c = x.dim(1);
  auto out = tape.make({c, r}, x.requires_grad());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out.val()[static_cast<std::size_t>(j) * r + i] =
          x.val()[static_cast<std::size_t>(i) * c + j];
  if (!out.requires_grad()) return out;
  auto xn = x.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, on, r, c]() {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        xn->grad[static_cast<std::size_t>(i) * c + j] +=
            on->grad[static_cast<std::size_t>(j) * r + i];
  };
  return out;
}

// [a,b,c] -> [b,a,c]
template <typename T>
Var<T> permute102(Tape<T>& tape, const Var<T>& x) {
  if (x.ndim() != 3) throw std::invalid_argument("transpose: permute expects 3-D");
  const int a = x.dim(0), b = x.dim(1), c = x.dim(2);
  auto out = tape.make({b, a, c}, x.requires_grad());
  for (int i = 0; i < a; ++i)
    for (int j = 0; j < b; ++j)
      std::memcpy(out.val().data() + (static_cast<std::size_t>(j) * a + i) * c,
                  x.val().data() + (static_cast<std::size_t>(i) * b + j) * c,
                  sizeof(T) * static_cast<std::size_t>(c));
  if (!out.requires_grad()) return out;
  auto xn = x.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, on, a, b, c]() {
    const auto& kk = detail::kt<T>();
    for (int i = 0; i < a; ++i)
      for (int j = 0; j < b; ++j)
        kk.axpy(T(1), on->grad.data() + (static_cast<std::size_t>(j) * a + i) * c,
                xn->grad.data() + (static_cast<std::size_t>(i) * b + j) * c,
                static_cast<std::size_t>(c));
  };
  return out;
}

template <typename T>
Var<T> concat_rows(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1))
    throw std::invalid_argument("concat: column mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  const int ra = a.dim(0), rb = b.dim(0), c = a.dim(1);
  auto out = tape.make({ra + rb, c}, a.requires_grad() || b.requires_grad());
  std::memcpy(out.val().data(), a.val().data(), sizeof(T) * a.val().size());
  std::memcpy(out.val().data() + a.val().size(), b.val().data(),
              sizeof(T) * b.val().size());
  if (!out.requires_grad()) return out;
  auto an = a.node(), bn = b.node();
  Node<T>* on = out.node().get();
  on->backprop = [an, bn, on]() {
    const auto& kk = detail::kt<T>();
    if (an->requires_grad)
      kk.axpy(T(1), on->grad.data(), an->grad.data(), an->grad.size());
    if (bn->requires_grad)
      kk.axpy(T(1), on->grad.data() + an->val.size(), bn->grad.data(),
              bn->grad.size());
  };
  return out;
}

template <typename T>
Var<T> slice_rows(Tape<T>& tape, const Var<T>& x, int begin, int end) {
  if (x.ndim() != 2) throw std::invalid_argument("slice: expects 2-D");
  if (begin < 0 || end > x.dim(0) || begin >= end)
    throw std::invalid_argument("slice: bad row range [" + std::to_string(begin) +
                                "," + std::to_string(end) + ") of " +
                                shape_str(x.shape()));
  const int c = x.dim(1);
  auto out = tape.make({end - begin, c}, x.requires_grad());
  std::memcpy(out.val().data(), x.val().data() + static_cast<std::size_t>(begin) * c,
              sizeof(T) * out.val().size());
  if (!out.requires_grad()) return out;
  auto xn = x.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, on, begin, c]() {
    detail::kt<T>().axpy(T(1), on->grad.data(),
                         xn->grad.data() + static_cast<std::size_t>(begin) * c,
                         on->grad.size());
  };
  return out;
}

// ------------------------------------------------------------ reductions

template <typename T>
Var<T> reduce_sum(Tape<T>& tape, const Var<T>& x) {
  auto out = tape.make({1}, x.requires_grad());
  out.val()[0] = detail::kt<T>().sum(x.val().data(),
                                     static_cast<std::size_t>(x.numel()));
  if (!out.requires_grad()) return out;
  auto xn = x.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, on]() {
    const T g = on->grad[0];
    for (auto& v : xn->grad) v += g;
  };
  return out;
}

template <typename T>
Var<T> reduce_mean(Tape<T>& tape, const Var<T>& x) {
  auto out = tape.make({1}, x.requires_grad());
  const T inv = T(1) / T(x.numel());
  out.val()[0] =
      detail::kt<T>().sum(x.val().data(), static_cast<std::size_t>(x.numel())) * inv;
  if (!out.requires_grad()) return out;
  auto xn = x.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, on, inv]() {
    const T g = on->grad[0] * inv;
    for (auto& v : xn->grad) v += g;
  };
  return out;
}

// [R,C] -> [C], mean over rows.
template <typename T>
Var<T> mean_axis0(Tape<T>& tape, const Var<T>& x) {
  if (x.ndim() != 2) throw std::invalid_argument("reduce-mean: axis0 expects 2-D");
  const int r = x.dim(0), c = x.dim(1);
  auto out = tape.make({c}, x.requires_grad());
  const auto& k = detail::kt<T>();
  for (int i = 0; i < r; ++i)
    k.axpy(T(1) / T(r), x.val().data() + static_cast<std::size_t>(i) * c,
           out.val().data(), static_cast<std::size_t>(c));
  if (!out.requires_grad()) return out;
  auto xn = x.node();
  Node<T>* on = out.node().get();
  on->backprop = [xn, on, r, c]() {
    const auto& kk = detail::kt<T>();
    for (int i = 0; i < r; ++i)
      kk.axpy(T(1) / T(r), on->grad.data(),
              xn->grad.data() + static_cast<std::size_t>(i) * c,
              static_cast<std::size_t>(c));
  };
  return out;
}

// --------------------------------------------------------------- conv1d

// x [Cin,L], w [Cout,Cin,kw], optional bias [Cout]; zero padding.
template <typename T>
Var<T> conv1d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& bias,
              int stride, int pad) {
  if (x.ndim() != 2 || w.ndim() != 3)
    throw std::invalid_argument("conv1d: expects x [Cin,L], w [Cout,Cin,k]");
  const int cin = x.dim(0), len = x.dim(1);
  const int cout = w.dim(0), kw = w.dim(2);
  if (w.dim(1) != cin)
    throw std::invalid_argument("conv1d: channel mismatch " + shape_str(x.shape()) +
                                " vs " + shape_str(w.shape()));
  if (bias.defined() && bias.numel() != cout)
    throw std::invalid_argument("conv1d: bias size mismatch");
  const int lout = (len + 2 * pad - kw) / stride + 1;
  if (lout < 1) throw std::invalid_argument("conv1d: output length < 1");

  // im2col, then one matmul against w viewed as [Cout, Cin*k].
  const int ck = cin * kw;
  auto cols = std::make_shared<std::vector<T>>(
      static_cast<std::size_t>(ck) * lout, T(0));
  for (int ci = 0; ci < cin; ++ci)
    for (int j = 0; j < kw; ++j) {
      T* dst = cols->data() + (static_cast<std::size_t>(ci) * kw + j) * lout;
      for (int t = 0; t < lout; ++t) {
        const int src = t * stride + j - pad;
        if (src >= 0 && src < len)
          dst[t] = x.val()[static_cast<std::size_t>(ci) * len + src];
      }
    }
  const bool rg = x.requires_grad() || w.requires_grad() ||
                  (bias.defined() && bias.requires_grad());
  auto out = tape.make({cout, lout}, rg);
  const auto& k = detail::kt<T>();
  k.matmul(w.val().data(), cols->data(), out.val().data(), cout, lout, ck,
           false, false);
  if (bias.defined())
    for (int co = 0; co < cout; ++co)
      for (int t = 0; t < lout; ++t)
        out.val()[static_cast<std::size_t>(co) * lout + t] +=
            bias.val()[static_cast<std::size_t>(co)];
  if (!rg) return out;
  auto xn = x.node(), wn = w.node();
  Node<T>* on = out.node().get();
  auto bn = bias.defined() ? bias.node() : nullptr;
  on->backprop = [xn, wn, bn, on, cols, cin, len, cout, kw, ck, lout, stride, pad]() {
    const auto& kk = detail::kt<T>();
    if (wn->requires_grad) {
      std::vector<T> tmp(wn->val.size(), T(0));
      kk.matmul(on->grad.data(), cols->data(), tmp.data(), cout, ck, lout,
                false, true);
      kk.axpy(T(1), tmp.data(), wn->grad.data(), tmp.size());
    }
    if (bn && bn->requires_grad) {
      for (int co = 0; co < cout; ++co)
        bn->grad[static_cast<std::size_t>(co)] += kk.sum(
            on->grad.data() + static_cast<std::size_t>(co) * lout,
            static_cast<std::size_t>(lout));
    }
    if (xn->requires_grad) {
      std::vector<T> dcols(static_cast<std::size_t>(ck) * lout, T(0));
      kk.matmul(wn->val.data(), on->grad.data(), dcols.data(), ck, lout, cout,
                true, false);
      for (int ci = 0; ci < cin; ++ci)
        for (int j = 0; j < kw; ++j) {
          const T* src = dcols.data() + (static_cast<std::size_t>(ci) * kw + j) * lout;
          for (int t = 0; t < lout; ++t) {
            const int dst = t * stride + j - pad;
            if (dst >= 0 && dst < len)
              xn->grad[static_cast<std::size_t>(ci) * len + dst] += src[t];
          }
        }
    }
  };
  return out;
}

template <typename T>
Var<T> conv1d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, int stride,
              int pad) {
  return conv1d(tape, x, w, Var<T>(), stride, pad);
}

}  // namespace mogen::ad
