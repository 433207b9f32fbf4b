// AVX2/FMA kernel variants. Compiled with -mavx2 -mfma in its own
// translation unit; only reached after the dispatcher has confirmed CPU
// support. Elementwise maps are bit-exact against the scalar reference;
// matmul and the reductions reorder additions, so they agree only within
// rounding error.

#include "scalar_impl.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

namespace mogen::kern::avx2 {

namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  lo = _mm_add_pd(lo, _mm_unpackhi_pd(lo, lo));
  return _mm_cvtsd_f64(lo);
}

}  // namespace

// ---------------------------------------------------------------- float

void matmul_f32(const float* a, const float* b, float* c, int m, int n, int k,
                bool trans_a, bool trans_b) {
  if (trans_a && trans_b) {
    scalar::matmul<float>(a, b, c, m, n, k, trans_a, trans_b);
    return;
  }
  if (!trans_a && trans_b) {
    // c[i,j] = dot(a_row_i, b_row_j)
    for (int i = 0; i < m; ++i) {
      const float* ai = a + static_cast<std::size_t>(i) * k;
      for (int j = 0; j < n; ++j) {
        const float* bj = b + static_cast<std::size_t>(j) * k;
        __m256 acc = _mm256_setzero_ps();
        int l = 0;
        for (; l + 8 <= k; l += 8) {
          acc = _mm256_fmadd_ps(_mm256_loadu_ps(ai + l),
                                _mm256_loadu_ps(bj + l), acc);
        }
        float s = hsum(acc);
        for (; l < k; ++l) s += ai[l] * bj[l];
        c[static_cast<std::size_t>(i) * n + j] = s;
      }
    }
    return;
  }
  // NN and TN: accumulate broadcast(a) * b_row into c_row.
  for (int i = 0; i < m; ++i) {
    float* ci = c + static_cast<std::size_t>(i) * n;
    int j = 0;
    for (; j + 8 <= n; j += 8) _mm256_storeu_ps(ci + j, _mm256_setzero_ps());
    for (; j < n; ++j) ci[j] = 0.0f;
  }
  for (int i = 0; i < m; ++i) {
    float* ci = c + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const float av = trans_a ? a[static_cast<std::size_t>(l) * m + i]
                               : a[static_cast<std::size_t>(i) * k + l];
      const float* bl = b + static_cast<std::size_t>(l) * n;
      const __m256 avv = _mm256_set1_ps(av);
      int jj = 0;
      for (; jj + 8 <= n; jj += 8) {
        __m256 cv = _mm256_loadu_ps(ci + jj);
        cv = _mm256_fmadd_ps(avv, _mm256_loadu_ps(bl + jj), cv);
        _mm256_storeu_ps(ci + jj, cv);
      }
      for (; jj < n; ++jj) ci[jj] += av * bl[jj];
    }
  }
}

void add_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i,
                     _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i,
                     _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i,
                     _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void sqdiff_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    _mm256_storeu_ps(out + i, _mm256_mul_ps(d, d));
  }
  for (; i < n; ++i) {
    const float d = a[i] - b[i];
    out[i] = d * d;
  }
}

void scale_f32(float alpha, const float* x, float* out, std::size_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 yv = _mm256_loadu_ps(y + i);
    yv = _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), yv);
    _mm256_storeu_ps(y + i, yv);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

float dot_f32(const float* a, const float* b, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
  float s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

float sum_f32(const float* x, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  float s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

float max_f32(const float* x, std::size_t n) {
  float m = x[0];
  std::size_t i = 0;
  if (n >= 8) {
    __m256 mv = _mm256_loadu_ps(x);
    for (i = 8; i + 8 <= n; i += 8)
      mv = _mm256_max_ps(mv, _mm256_loadu_ps(x + i));
    alignas(32) float tmp[8];
    _mm256_store_ps(tmp, mv);
    for (float t : tmp) m = t > m ? t : m;
  }
  for (; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

void relu_f32(const float* x, float* out, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_max_ps(zero, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_grad_f32(const float* x, const float* gy, float* gx, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    __m256 g = _mm256_and_ps(mask, _mm256_loadu_ps(gy + i));
    _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), g));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0f) gx[i] += gy[i];
  }
}

void adamw_f32(float* p, const float* g, float* m, float* v, std::size_t n,
               float lr, float beta1, float beta2, float eps,
               float weight_decay, float bc1, float bc2) {
  const __m256 b1 = _mm256_set1_ps(beta1);
  const __m256 b2 = _mm256_set1_ps(beta2);
  const __m256 ob1 = _mm256_set1_ps(1.0f - beta1);
  const __m256 ob2 = _mm256_set1_ps(1.0f - beta2);
  const __m256 inv_bc1 = _mm256_set1_ps(1.0f / bc1);
  const __m256 inv_bc2 = _mm256_set1_ps(1.0f / bc2);
  const __m256 lrv = _mm256_set1_ps(lr);
  const __m256 epsv = _mm256_set1_ps(eps);
  const __m256 wdv = _mm256_set1_ps(weight_decay);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gv = _mm256_loadu_ps(g + i);
    __m256 mv = _mm256_loadu_ps(m + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    mv = _mm256_fmadd_ps(b1, mv, _mm256_mul_ps(ob1, gv));
    vv = _mm256_fmadd_ps(b2, vv, _mm256_mul_ps(ob2, _mm256_mul_ps(gv, gv)));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    const __m256 mhat = _mm256_mul_ps(mv, inv_bc1);
    const __m256 vhat = _mm256_mul_ps(vv, inv_bc2);
    const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), epsv);
    __m256 pv = _mm256_loadu_ps(p + i);
    __m256 upd = _mm256_add_ps(_mm256_div_ps(mhat, denom), _mm256_mul_ps(wdv, pv));
    pv = _mm256_fnmadd_ps(lrv, upd, pv);
    _mm256_storeu_ps(p + i, pv);
  }
  if (i < n)
    scalar::adamw<float>(p + i, g + i, m + i, v + i, n - i, lr, beta1, beta2,
                         eps, weight_decay, bc1, bc2);
}

// --------------------------------------------------------------- double

void matmul_f64(const double* a, const double* b, double* c, int m, int n,
                int k, bool trans_a, bool trans_b) {
  if (trans_a && trans_b) {
    scalar::matmul<double>(a, b, c, m, n, k, trans_a, trans_b);
    return;
  }
  if (!trans_a && trans_b) {
    for (int i = 0; i < m; ++i) {
      const double* ai = a + static_cast<std::size_t>(i) * k;
      for (int j = 0; j < n; ++j) {
        const double* bj = b + static_cast<std::size_t>(j) * k;
        __m256d acc = _mm256_setzero_pd();
        int l = 0;
        for (; l + 4 <= k; l += 4) {
          acc = _mm256_fmadd_pd(_mm256_loadu_pd(ai + l),
                                _mm256_loadu_pd(bj + l), acc);
        }
        double s = hsum(acc);
        for (; l < k; ++l) s += ai[l] * bj[l];
        c[static_cast<std::size_t>(i) * n + j] = s;
      }
    }
    return;
  }
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = 0.0;
  }
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const double av = trans_a ? a[static_cast<std::size_t>(l) * m + i]
                                : a[static_cast<std::size_t>(i) * k + l];
      const double* bl = b + static_cast<std::size_t>(l) * n;
      const __m256d avv = _mm256_set1_pd(av);
      int jj = 0;
      for (; jj + 4 <= n; jj += 4) {
        __m256d cv = _mm256_loadu_pd(ci + jj);
        cv = _mm256_fmadd_pd(avv, _mm256_loadu_pd(bl + jj), cv);
        _mm256_storeu_pd(ci + jj, cv);
      }
      for (; jj < n; ++jj) ci[jj] += av * bl[jj];
    }
  }
}

void add_f64(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_f64(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_f64(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void sqdiff_f64(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    _mm256_storeu_pd(out + i, _mm256_mul_pd(d, d));
  }
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    out[i] = d * d;
  }
}

void scale_f64(double alpha, const double* x, double* out, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
    _mm256_storeu_pd(y + i, yv);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_f64(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

void adamw_f64(double* p, const double* g, double* m, double* v, std::size_t n,
               double lr, double beta1, double beta2, double eps,
               double weight_decay, double bc1, double bc2) {
  const __m256d b1 = _mm256_set1_pd(beta1);
  const __m256d b2 = _mm256_set1_pd(beta2);
  const __m256d ob1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d ob2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d inv_bc1 = _mm256_set1_pd(1.0 / bc1);
  const __m256d inv_bc2 = _mm256_set1_pd(1.0 / bc2);
  const __m256d lrv = _mm256_set1_pd(lr);
  const __m256d epsv = _mm256_set1_pd(eps);
  const __m256d wdv = _mm256_set1_pd(weight_decay);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    __m256d mv = _mm256_loadu_pd(m + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    mv = _mm256_fmadd_pd(b1, mv, _mm256_mul_pd(ob1, gv));
    vv = _mm256_fmadd_pd(b2, vv, _mm256_mul_pd(ob2, _mm256_mul_pd(gv, gv)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_mul_pd(mv, inv_bc1);
    const __m256d vhat = _mm256_mul_pd(vv, inv_bc2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), epsv);
    __m256d pv = _mm256_loadu_pd(p + i);
    __m256d upd = _mm256_add_pd(_mm256_div_pd(mhat, denom), _mm256_mul_pd(wdv, pv));
    pv = _mm256_fnmadd_pd(lrv, upd, pv);
    _mm256_storeu_pd(p + i, pv);
  }
  if (i < n)
    scalar::adamw<double>(p + i, g + i, m + i, v + i, n - i, lr, beta1, beta2,
                          eps, weight_decay, bc1, bc2);
}

}  // namespace mogen::kern::avx2

namespace mogen::kern {

template <typename T>
const KernelTable<T>& avx2_table();

template <>
const KernelTable<float>& avx2_table<float>() {
  static const KernelTable<float> t = [] {
    KernelTable<float> k = scalar::make_table<float>();
    k.matmul = &avx2::matmul_f32;
    k.add = &avx2::add_f32;
    k.sub = &avx2::sub_f32;
    k.mul = &avx2::mul_f32;
    k.sqdiff = &avx2::sqdiff_f32;
    k.scale = &avx2::scale_f32;
    k.axpy = &avx2::axpy_f32;
    k.dot = &avx2::dot_f32;
    k.sum = &avx2::sum_f32;
    k.max = &avx2::max_f32;
    k.relu = &avx2::relu_f32;
    k.relu_grad = &avx2::relu_grad_f32;
    k.adamw = &avx2::adamw_f32;
    return k;
  }();
  return t;
}

template <>
const KernelTable<double>& avx2_table<double>() {
  static const KernelTable<double> t = [] {
    KernelTable<double> k = scalar::make_table<double>();
    k.matmul = &avx2::matmul_f64;
    k.add = &avx2::add_f64;
    k.sub = &avx2::sub_f64;
    k.mul = &avx2::mul_f64;
    k.sqdiff = &avx2::sqdiff_f64;
    k.scale = &avx2::scale_f64;
    k.axpy = &avx2::axpy_f64;
    k.dot = &avx2::dot_f64;
    k.sum = &avx2::sum_f64;
    k.adamw = &avx2::adamw_f64;
    return k;
  }();
  return t;
}

}  // namespace mogen::kern

#endif  // __AVX2__
