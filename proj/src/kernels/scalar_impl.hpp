#pragma once

// Scalar reference kernels. These define the semantics; the SIMD variants
// must agree with them within the tolerances checked in the equivalence
// tests (bit-exact for elementwise maps, small relative error where the
// reduction order differs).

#include <cmath>
#include <cstddef>

#include "mogen/kernels/kernels.hpp"

namespace mogen::kern::scalar {

template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int n, int k, bool trans_a,
            bool trans_b) {
  auto at = [&](int i, int l) { return trans_a ? a[l * m + i] : a[i * k + l]; };
  auto bt = [&](int l, int j) { return trans_b ? b[j * k + l] : b[l * n + j]; };
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = T(0);
      for (int l = 0; l < k; ++l) acc += at(i, l) * bt(l, j);
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void add(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void sqdiff(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T d = a[i] - b[i];
    out[i] = d * d;
  }
}

template <typename T>
void scale(T alpha, const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
T sum(const T* x, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <typename T>
T max(const T* x, std::size_t n) {
  T m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

template <typename T>
void relu(const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_grad(const T* x, const T* gy, T* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > T(0)) gx[i] += gy[i];
  }
}

// tanh-approximation GELU; smooth, so finite-difference checks apply.
template <typename T>
void gelu(const T* x, T* out, std::size_t n) {
  const T c = T(0.7978845608028654);  // sqrt(2/pi)
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x[i];
    const T u = c * (v + T(0.044715) * v * v * v);
    out[i] = T(0.5) * v * (T(1) + std::tanh(u));
  }
}

template <typename T>
void gelu_grad(const T* x, const T* gy, T* gx, std::size_t n) {
  const T c = T(0.7978845608028654);
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x[i];
    const T u = c * (v + T(0.044715) * v * v * v);
    const T t = std::tanh(u);
    const T du = c * (T(1) + T(3) * T(0.044715) * v * v);
    const T d = T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * du;
    gx[i] += gy[i] * d;
  }
}

template <typename T>
void exp_v(const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

template <typename T>
void log_v(const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(x[i]);
}

template <typename T>
void softmax_row(const T* x, T* out, int n) {
  T m = max(x, static_cast<std::size_t>(n));
  T denom = T(0);
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - m);
    denom += out[i];
  }
  const T inv = T(1) / denom;
  for (int i = 0; i < n; ++i) out[i] *= inv;
}

template <typename T>
void adamw(T* p, const T* g, T* m, T* v, std::size_t n, T lr, T beta1, T beta2,
           T eps, T weight_decay, T bc1, T bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
  }
}

template <typename T>
KernelTable<T> make_table() {
  KernelTable<T> t;
  t.matmul = &matmul<T>;
  t.add = &add<T>;
  t.sub = &sub<T>;
  t.mul = &mul<T>;
  t.sqdiff = &sqdiff<T>;
  t.scale = &scale<T>;
  t.axpy = &axpy<T>;
  t.dot = &dot<T>;
  t.sum = &sum<T>;
  t.max = &max<T>;
  t.relu = &relu<T>;
  t.relu_grad = &relu_grad<T>;
  t.gelu = &gelu<T>;
  t.gelu_grad = &gelu_grad<T>;
  t.exp = &exp_v<T>;
  t.log = &log_v<T>;
  t.softmax_row = &softmax_row<T>;
  t.adamw = &adamw<T>;
  return t;
}

}  // namespace mogen::kern::scalar
