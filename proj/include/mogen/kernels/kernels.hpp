#pragma once

// Arithmetic inner loops used by the autodiff substrate and the optimizers.
// Every kernel has a scalar reference implementation; AVX2 (x86-64) and NEON
// (aarch64) variants override the hot entries and are selected once at
// startup. The MOGEN_KERNELS environment variable ("scalar", "avx2", "neon")
// forces a backend, which the equivalence tests use to compare results.

#include <cstddef>
#include <string>

namespace mogen::kern {

enum class Isa { scalar = 0, avx2 = 1, neon = 2 };

const char* isa_name(Isa isa);

// Best ISA supported by the running CPU.
Isa detect_best_isa();

// Backend in effect (detection result, unless overridden).
Isa active_isa();

// Force a backend; throws std::invalid_argument if unsupported on this CPU.
void force_isa(Isa isa);

template <typename T>
struct KernelTable {
  // c = op(a) * op(b); a is m x k (k x m if trans_a), b is k x n
  // (n x k if trans_b), c is m x n, all row-major and contiguous.
  void (*matmul)(const T* a, const T* b, T* c, int m, int n, int k,
                 bool trans_a, bool trans_b);

  void (*add)(const T* a, const T* b, T* out, std::size_t n);
  void (*sub)(const T* a, const T* b, T* out, std::size_t n);
  void (*mul)(const T* a, const T* b, T* out, std::size_t n);
  void (*sqdiff)(const T* a, const T* b, T* out, std::size_t n);  // (a-b)^2
  void (*scale)(T alpha, const T* x, T* out, std::size_t n);
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);  // y += alpha*x

  T (*dot)(const T* a, const T* b, std::size_t n);
  T (*sum)(const T* x, std::size_t n);
  T (*max)(const T* x, std::size_t n);

  void (*relu)(const T* x, T* out, std::size_t n);
  // gx += gy where x > 0
  void (*relu_grad)(const T* x, const T* gy, T* gx, std::size_t n);
  void (*gelu)(const T* x, T* out, std::size_t n);
  void (*gelu_grad)(const T* x, const T* gy, T* gx, std::size_t n);

  void (*exp)(const T* x, T* out, std::size_t n);
  void (*log)(const T* x, T* out, std::size_t n);
  // One row of a numerically stable softmax.
  void (*softmax_row)(const T* x, T* out, int n);

  // Fused AdamW update. bc1/bc2 are the bias-correction divisors
  // 1-beta1^t and 1-beta2^t for the current step t.
  void (*adamw)(T* p, const T* g, T* m, T* v, std::size_t n, T lr, T beta1,
                T beta2, T eps, T weight_decay, T bc1, T bc2);
};

// Table for the active backend. Stable for the lifetime of the process
// unless force_isa() is called.
template <typename T>
const KernelTable<T>& table();

// Backend-specific tables (entries fall back to scalar where a variant
// does not exist). Used by the equivalence tests.
template <typename T>
const KernelTable<T>& table_for(Isa isa);

}  // namespace mogen::kern
