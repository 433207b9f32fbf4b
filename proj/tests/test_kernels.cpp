#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "mogen/autodiff/rng.hpp"
#include "mogen/kernels/kernels.hpp"

using mogen::Rng;
namespace kern = mogen::kern;

namespace {

template <typename T>
std::vector<T> randvec(Rng& rng, std::size_t n, double scl = 1.0) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.normal() * scl);
  return v;
}

template <typename T>
void expect_close(const std::vector<T>& a, const std::vector<T>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({1.0, std::fabs(double(a[i])), std::fabs(double(b[i]))});
    CHECK(std::fabs(double(a[i]) - double(b[i])) / denom <= tol);
  }
}

bool simd_available() { return kern::detect_best_isa() != kern::Isa::scalar; }

// The SIMD backend present on this architecture.
kern::Isa simd_isa() { return kern::detect_best_isa(); }

template <typename T>
void check_matmul_equivalence(double tol) {
  const auto& ref = kern::table_for<T>(kern::Isa::scalar);
  const auto& simd = kern::table_for<T>(simd_isa());
  Rng rng(42);
  const int shapes[][3] = {{1, 1, 1},   {3, 5, 7},   {8, 8, 8},  {17, 9, 33},
                           {64, 64, 64}, {5, 128, 1}, {1, 7, 129}};
  for (const auto& s : shapes) {
    const int m = s[0], n = s[1], k = s[2];
    for (bool ta : {false, true})
      for (bool tb : {false, true}) {
        auto a = randvec<T>(rng, static_cast<std::size_t>(m) * k);
        auto b = randvec<T>(rng, static_cast<std::size_t>(k) * n);
        std::vector<T> c1(static_cast<std::size_t>(m) * n),
            c2(static_cast<std::size_t>(m) * n);
        ref.matmul(a.data(), b.data(), c1.data(), m, n, k, ta, tb);
        simd.matmul(a.data(), b.data(), c2.data(), m, n, k, ta, tb);
        expect_close(c1, c2, tol * k);
      }
  }
}

}  // namespace

TEST_CASE("dispatch reports a valid backend") {
  const auto isa = kern::active_isa();
  CHECK((isa == kern::Isa::scalar || isa == kern::Isa::avx2 ||
         isa == kern::Isa::neon));
  CHECK(kern::isa_name(isa) != nullptr);
}

TEST_CASE("matmul simd variants match scalar reference") {
  if (!simd_available()) return;
  check_matmul_equivalence<float>(1e-6);
  check_matmul_equivalence<double>(1e-14);
}

TEST_CASE("elementwise simd variants are bit-exact against scalar") {
  if (!simd_available()) return;
  const auto& ref = kern::table_for<float>(kern::Isa::scalar);
  const auto& simd = kern::table_for<float>(simd_isa());
  Rng rng(7);
  for (std::size_t n : {1u, 7u, 8u, 9u, 64u, 1000u, 1023u}) {
    auto a = randvec<float>(rng, n);
    auto b = randvec<float>(rng, n);
    std::vector<float> r1(n), r2(n);

    ref.add(a.data(), b.data(), r1.data(), n);
    simd.add(a.data(), b.data(), r2.data(), n);
    CHECK(r1 == r2);

    ref.sub(a.data(), b.data(), r1.data(), n);
    simd.sub(a.data(), b.data(), r2.data(), n);
    CHECK(r1 == r2);

    ref.mul(a.data(), b.data(), r1.data(), n);
    simd.mul(a.data(), b.data(), r2.data(), n);
    CHECK(r1 == r2);

    ref.sqdiff(a.data(), b.data(), r1.data(), n);
    simd.sqdiff(a.data(), b.data(), r2.data(), n);
    CHECK(r1 == r2);

    ref.scale(1.7f, a.data(), r1.data(), n);
    simd.scale(1.7f, a.data(), r2.data(), n);
    CHECK(r1 == r2);

    ref.relu(a.data(), r1.data(), n);
    simd.relu(a.data(), r2.data(), n);
    CHECK(r1 == r2);

    CHECK(ref.max(a.data(), n) == simd.max(a.data(), n));
  }
}

TEST_CASE("reduction and fused simd variants match within rounding") {
  if (!simd_available()) return;
  const auto& ref = kern::table_for<float>(kern::Isa::scalar);
  const auto& simd = kern::table_for<float>(simd_isa());
  Rng rng(11);
  for (std::size_t n : {1u, 9u, 333u, 4096u}) {
    auto a = randvec<float>(rng, n);
    auto b = randvec<float>(rng, n);
    const double tol = 1e-6 * static_cast<double>(n);
    CHECK(std::fabs(ref.dot(a.data(), b.data(), n) -
                    simd.dot(a.data(), b.data(), n)) <= tol);
    CHECK(std::fabs(ref.sum(a.data(), n) - simd.sum(a.data(), n)) <= tol);

    auto y1 = b, y2 = b;
    ref.axpy(0.37f, a.data(), y1.data(), n);
    simd.axpy(0.37f, a.data(), y2.data(), n);
    expect_close(y1, y2, 1e-6);

    auto gy = randvec<float>(rng, n);
    auto gx1 = randvec<float>(rng, n), gx2 = gx1;
    ref.relu_grad(a.data(), gy.data(), gx1.data(), n);
    simd.relu_grad(a.data(), gy.data(), gx2.data(), n);
    CHECK(gx1 == gx2);
  }
}

TEST_CASE("adamw simd variant matches scalar reference") {
  if (!simd_available()) return;
  const auto& ref = kern::table_for<float>(kern::Isa::scalar);
  const auto& simd = kern::table_for<float>(simd_isa());
  Rng rng(13);
  const std::size_t n = 515;
  auto p1 = randvec<float>(rng, n);
  auto g = randvec<float>(rng, n);
  auto m1 = randvec<float>(rng, n, 0.1);
  auto v1 = randvec<float>(rng, n, 0.01);
  for (auto& x : v1) x = std::fabs(x);
  auto p2 = p1, m2 = m1, v2 = v1;
  ref.adamw(p1.data(), g.data(), m1.data(), v1.data(), n, 1e-3f, 0.9f, 0.99f,
            1e-8f, 0.01f, 0.1f, 0.0199f);
  simd.adamw(p2.data(), g.data(), m2.data(), v2.data(), n, 1e-3f, 0.9f, 0.99f,
             1e-8f, 0.01f, 0.1f, 0.0199f);
  expect_close(p1, p2, 1e-6);
  expect_close(m1, m2, 1e-6);
  expect_close(v1, v2, 1e-6);
}

TEST_CASE("forced backend is honored") {
  const auto before = kern::active_isa();
  kern::force_isa(kern::Isa::scalar);
  CHECK(kern::active_isa() == kern::Isa::scalar);
  kern::force_isa(before);
  CHECK(kern::active_isa() == before);
}
