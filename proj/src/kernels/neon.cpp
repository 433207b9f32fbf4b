// NEON kernel variants for aarch64, float only; double falls back to the
// scalar reference. NEON is baseline on aarch64, so no runtime probe is
// needed beyond the architecture check.

#include "scalar_impl.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

namespace mogen::kern::neon {

void matmul_f32(const float* a, const float* b, float* c, int m, int n, int k,
                bool trans_a, bool trans_b) {
  if (trans_a && trans_b) {
    scalar::matmul<float>(a, b, c, m, n, k, trans_a, trans_b);
    return;
  }
  if (!trans_a && trans_b) {
    for (int i = 0; i < m; ++i) {
      const float* ai = a + static_cast<std::size_t>(i) * k;
      for (int j = 0; j < n; ++j) {
        const float* bj = b + static_cast<std::size_t>(j) * k;
        float32x4_t acc = vdupq_n_f32(0.0f);
        int l = 0;
        for (; l + 4 <= k; l += 4)
          acc = vfmaq_f32(acc, vld1q_f32(ai + l), vld1q_f32(bj + l));
        float s = vaddvq_f32(acc);
        for (; l < k; ++l) s += ai[l] * bj[l];
        c[static_cast<std::size_t>(i) * n + j] = s;
      }
    }
    return;
  }
  for (int i = 0; i < m; ++i) {
    float* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = 0.0f;
  }
  for (int i = 0; i < m; ++i) {
    float* ci = c + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const float av = trans_a ? a[static_cast<std::size_t>(l) * m + i]
                               : a[static_cast<std::size_t>(i) * k + l];
      const float* bl = b + static_cast<std::size_t>(l) * n;
      const float32x4_t avv = vdupq_n_f32(av);
      int jj = 0;
      for (; jj + 4 <= n; jj += 4) {
        float32x4_t cv = vld1q_f32(ci + jj);
        cv = vfmaq_f32(cv, avv, vld1q_f32(bl + jj));
        vst1q_f32(ci + jj, cv);
      }
      for (; jj < n; ++jj) ci[jj] += av * bl[jj];
    }
  }
}

void add_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(out + i, vaddq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(out + i, vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(out + i, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void sqdiff_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float32x4_t d = vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i));
    vst1q_f32(out + i, vmulq_f32(d, d));
  }
  for (; i < n; ++i) {
    const float d = a[i] - b[i];
    out[i] = d * d;
  }
}

void scale_f32(float alpha, const float* x, float* out, std::size_t n) {
  const float32x4_t av = vdupq_n_f32(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(av, vld1q_f32(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  const float32x4_t av = vdupq_n_f32(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float32x4_t yv = vld1q_f32(y + i);
    yv = vfmaq_f32(yv, av, vld1q_f32(x + i));
    vst1q_f32(y + i, yv);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

float dot_f32(const float* a, const float* b, std::size_t n) {
  float32x4_t acc = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = vfmaq_f32(acc, vld1q_f32(a + i), vld1q_f32(b + i));
  float s = vaddvq_f32(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

float sum_f32(const float* x, std::size_t n) {
  float32x4_t acc = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = vaddq_f32(acc, vld1q_f32(x + i));
  float s = vaddvq_f32(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

float max_f32(const float* x, std::size_t n) {
  float m = x[0];
  std::size_t i = 0;
  if (n >= 4) {
    float32x4_t mv = vld1q_f32(x);
    for (i = 4; i + 4 <= n; i += 4) mv = vmaxq_f32(mv, vld1q_f32(x + i));
    const float vm = vmaxvq_f32(mv);
    m = vm > m ? vm : m;
  }
  for (; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

void relu_f32(const float* x, float* out, std::size_t n) {
  const float32x4_t zero = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(out + i, vmaxq_f32(zero, vld1q_f32(x + i)));
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

}  // namespace mogen::kern::neon

namespace mogen::kern {

template <typename T>
const KernelTable<T>& neon_table();

template <>
const KernelTable<float>& neon_table<float>() {
  static const KernelTable<float> t = [] {
    KernelTable<float> k = scalar::make_table<float>();
    k.matmul = &neon::matmul_f32;
    k.add = &neon::add_f32;
    k.sub = &neon::sub_f32;
    k.mul = &neon::mul_f32;
    k.sqdiff = &neon::sqdiff_f32;
    k.scale = &neon::scale_f32;
    k.axpy = &neon::axpy_f32;
    k.dot = &neon::dot_f32;
    k.sum = &neon::sum_f32;
    k.max = &neon::max_f32;
    k.relu = &neon::relu_f32;
    return k;
  }();
  return t;
}

template <>
const KernelTable<double>& neon_table<double>() {
  static const KernelTable<double> t = scalar::make_table<double>();
  return t;
}

}  // namespace mogen::kern

#endif  // __aarch64__
