#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "gradcheck.hpp"
#include "mogen/autodiff/checkpoint.hpp"
#include "mogen/autodiff/ops.hpp"
#include "mogen/autodiff/optim.hpp"
#include "mogen/autodiff/rng.hpp"

using namespace mogen;
using ad::Tape;
using ad::Var;
using gradcheck::randn_leaf;

namespace {

// Weighted-sum loss exercises non-uniform output gradients.
Var<double> weighted_sum(Tape<double>& t, const Var<double>& x,
                         const Var<double>& w) {
  return ad::reduce_sum(t, ad::mul(t, x, w));
}

}  // namespace

TEST_CASE("forward examples for the basic operators") {
  Tape<float> t;
  auto a = Var<float>::leaf({2, 2}, {1, 2, 3, 4}, false);
  auto eye = Var<float>::leaf({2, 2}, {1, 0, 0, 1}, false);
  auto prod = ad::matmul(t, a, eye);
  CHECK(prod.val() == std::vector<float>{1, 2, 3, 4});

  auto z = Var<float>::leaf({2}, {0, 0}, false);
  auto sm = ad::softmax(t, z);
  CHECK(sm.val()[0] == doctest::Approx(0.5));
  CHECK(sm.val()[1] == doctest::Approx(0.5));

  // Constant vector normalizes to zero pre-affine (identity affine here).
  auto c = Var<float>::leaf({4}, {3, 3, 3, 3}, false);
  auto gamma = Var<float>::leaf({4}, {1, 1, 1, 1}, false);
  auto beta = Var<float>::leaf({4}, {0, 0, 0, 0}, false);
  auto ln = ad::layer_norm(t, c, gamma, beta, 1e-5f);
  for (float v : ln.val()) CHECK(v == doctest::Approx(0.0f));
}

TEST_CASE("backward basics") {
  SUBCASE("d(x^2)/dx at x=3 is 6") {
    Tape<double> t;
    auto x = Var<double>::leaf({1}, {3.0}, true);
    auto loss = ad::reduce_sum(t, ad::mul(t, x, x));
    t.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(6.0));
  }
  SUBCASE("gradient of mean is 1/N") {
    Tape<double> t;
    Rng rng(1);
    auto x = randn_leaf({3, 4}, rng);
    auto loss = ad::reduce_mean(t, x);
    t.backward(loss);
    for (double g : x.grad()) CHECK(g == doctest::Approx(1.0 / 12.0));
  }
  SUBCASE("detached branch receives no gradient") {
    Tape<double> t;
    auto x = Var<double>::leaf({1}, {2.0}, true);
    auto d = x.detach();
    CHECK(d.val() == x.val());
    CHECK_FALSE(d.requires_grad());
    auto loss = ad::reduce_sum(t, ad::mul(t, d, d));
    t.backward(loss);
    CHECK(x.grad()[0] == 0.0);
  }
  SUBCASE("backward rejects non-scalar loss") {
    Tape<double> t;
    auto x = Var<double>::leaf({2}, {1.0, 2.0}, true);
    auto y = ad::mul(t, x, x);
    CHECK_THROWS_AS(t.backward(y), std::invalid_argument);
  }
  SUBCASE("accumulation across multiple uses") {
    Tape<double> t;
    auto x = Var<double>::leaf({1}, {5.0}, true);
    auto loss = ad::reduce_sum(t, ad::add(t, x, x));
    t.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
  }
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(99);
  auto x = randn_leaf({3, 3}, rng);
  auto w1 = randn_leaf({3, 3}, rng, false);
  auto w2 = randn_leaf({3, 3}, rng, false);

  auto grad_of = [&](double a, double b) {
    x.zero_grad();
    Tape<double> t;
    auto l1 = ad::reduce_sum(t, ad::mul(t, ad::matmul(t, x, w1), x));
    auto l2 = ad::reduce_mean(t, ad::gelu(t, ad::matmul(t, x, w2)));
    auto loss = ad::add(t, ad::scale(t, l1, a), ad::scale(t, l2, b));
    t.backward(loss);
    return x.grad();
  };

  const auto g1 = grad_of(1.0, 0.0);
  const auto g2 = grad_of(0.0, 1.0);
  const auto gc = grad_of(2.5, -1.25);
  for (std::size_t i = 0; i < gc.size(); ++i)
    CHECK(gc[i] == doctest::Approx(2.5 * g1[i] - 1.25 * g2[i]).epsilon(1e-9));
}

TEST_CASE("finite differences validate every operator") {
  Rng rng(2024);

  SUBCASE("matmul all transpose combinations") {
    for (bool ta : {false, true})
      for (bool tb : {false, true}) {
        auto a = randn_leaf(ta ? ad::Shape{4, 3} : ad::Shape{3, 4}, rng);
        auto b = randn_leaf(tb ? ad::Shape{5, 4} : ad::Shape{4, 5}, rng);
        auto w = randn_leaf({3, 5}, rng, false);
        auto fn = [&](Tape<double>& t) {
          return weighted_sum(t, ad::matmul(t, a, b, ta, tb), w);
        };
        CHECK(gradcheck::max_rel_error(fn, {a, b}) < gradcheck::kTolerance);
      }
  }
  SUBCASE("bmm") {
    for (bool tb : {false, true}) {
      auto a = randn_leaf({2, 3, 4}, rng);
      auto b = randn_leaf(tb ? ad::Shape{2, 5, 4} : ad::Shape{2, 4, 5}, rng);
      auto w = randn_leaf({2, 3, 5}, rng, false);
      auto fn = [&](Tape<double>& t) {
        return weighted_sum(t, ad::bmm(t, a, b, tb), w);
      };
      CHECK(gradcheck::max_rel_error(fn, {a, b}) < gradcheck::kTolerance);
    }
  }
  SUBCASE("add and mul broadcast modes") {
    auto a = randn_leaf({4, 6}, rng);
    auto row = randn_leaf({6}, rng);
    auto sc = randn_leaf({1}, rng);
    auto same = randn_leaf({4, 6}, rng);
    auto w = randn_leaf({4, 6}, rng, false);
    for (auto* b : {&same, &row, &sc}) {
      auto fn_add = [&](Tape<double>& t) {
        return weighted_sum(t, ad::add(t, a, *b), w);
      };
      auto fn_mul = [&](Tape<double>& t) {
        return weighted_sum(t, ad::mul(t, a, *b), w);
      };
      CHECK(gradcheck::max_rel_error(fn_add, {a, *b}) < gradcheck::kTolerance);
      CHECK(gradcheck::max_rel_error(fn_mul, {a, *b}) < gradcheck::kTolerance);
    }
  }
  SUBCASE("sub scale sqdiff") {
    auto a = randn_leaf({3, 5}, rng);
    auto b = randn_leaf({3, 5}, rng);
    auto w = randn_leaf({3, 5}, rng, false);
    auto fn = [&](Tape<double>& t) {
      auto d = ad::sub(t, a, b);
      auto s = ad::scale(t, d, 1.7);
      return weighted_sum(t, ad::sqdiff(t, s, b), w);
    };
    CHECK(gradcheck::max_rel_error(fn, {a, b}) < gradcheck::kTolerance);
  }
  SUBCASE("conv1d stride and padding") {
    for (auto [stride, pad] : {std::pair{1, 1}, std::pair{2, 0}, std::pair{2, 1}}) {
      auto x = randn_leaf({3, 12}, rng);
      auto wgt = randn_leaf({4, 3, 3}, rng, true, 0.5);
      auto bias = randn_leaf({4}, rng);
      const int lout = (12 + 2 * pad - 3) / stride + 1;
      auto w = randn_leaf({4, lout}, rng, false);
      auto fn = [&, stride = stride, pad = pad](Tape<double>& t) {
        return weighted_sum(t, ad::conv1d(t, x, wgt, bias, stride, pad), w);
      };
      CHECK(gradcheck::max_rel_error(fn, {x, wgt, bias}) < gradcheck::kTolerance);
    }
  }
  SUBCASE("layer norm") {
    auto x = randn_leaf({4, 8}, rng);
    auto gamma = randn_leaf({8}, rng);
    auto beta = randn_leaf({8}, rng);
    auto w = randn_leaf({4, 8}, rng, false);
    auto fn = [&](Tape<double>& t) {
      return weighted_sum(t, ad::layer_norm(t, x, gamma, beta, 1e-5), w);
    };
    CHECK(gradcheck::max_rel_error(fn, {x, gamma, beta}) < gradcheck::kTolerance);
  }
  SUBCASE("softmax and log_softmax") {
    auto x = randn_leaf({3, 7}, rng);
    auto w = randn_leaf({3, 7}, rng, false);
    auto fn_sm = [&](Tape<double>& t) {
      return weighted_sum(t, ad::softmax(t, x), w);
    };
    auto fn_lsm = [&](Tape<double>& t) {
      return weighted_sum(t, ad::log_softmax(t, x), w);
    };
    CHECK(gradcheck::max_rel_error(fn_sm, {x}) < gradcheck::kTolerance);
    CHECK(gradcheck::max_rel_error(fn_lsm, {x}) < gradcheck::kTolerance);
  }
  SUBCASE("activations and pointwise maps") {
    auto x = randn_leaf({5, 5}, rng);
    // Keep relu inputs away from the kink.
    for (auto& v : x.val())
      if (std::fabs(v) < 1e-3) v += 0.1;
    auto w = randn_leaf({5, 5}, rng, false);
    auto fn_relu = [&](Tape<double>& t) {
      return weighted_sum(t, ad::relu(t, x), w);
    };
    auto fn_gelu = [&](Tape<double>& t) {
      return weighted_sum(t, ad::gelu(t, x), w);
    };
    auto fn_exp = [&](Tape<double>& t) {
      return weighted_sum(t, ad::vexp(t, x), w);
    };
    CHECK(gradcheck::max_rel_error(fn_relu, {x}) < gradcheck::kTolerance);
    CHECK(gradcheck::max_rel_error(fn_gelu, {x}) < gradcheck::kTolerance);
    CHECK(gradcheck::max_rel_error(fn_exp, {x}) < gradcheck::kTolerance);

    auto pos = randn_leaf({4, 4}, rng);
    for (auto& v : pos.val()) v = std::fabs(v) + 0.5;
    auto wp = randn_leaf({4, 4}, rng, false);
    auto fn_log = [&](Tape<double>& t) {
      return weighted_sum(t, ad::vlog(t, pos), wp);
    };
    CHECK(gradcheck::max_rel_error(fn_log, {pos}) < gradcheck::kTolerance);
  }
  SUBCASE("indexing and shaping") {
    auto x = randn_leaf({6, 4}, rng);
    std::vector<int> rows = {0, 5, 2, 2};
    std::vector<int> cols = {3, 0, 1};
    std::vector<int> per_row = {1, 3, 0, 2, 2, 1};
    auto wr = randn_leaf({4, 4}, rng, false);
    auto wc = randn_leaf({6, 3}, rng, false);
    auto wp = randn_leaf({6}, rng, false);
    auto fn_rows = [&](Tape<double>& t) {
      return weighted_sum(t, ad::gather_rows(t, x, rows), wr);
    };
    auto fn_cols = [&](Tape<double>& t) {
      return weighted_sum(t, ad::gather_cols(t, x, cols), wc);
    };
    auto fn_take = [&](Tape<double>& t) {
      return weighted_sum(t, ad::take_per_row(t, x, per_row), wp);
    };
    CHECK(gradcheck::max_rel_error(fn_rows, {x}) < gradcheck::kTolerance);
    CHECK(gradcheck::max_rel_error(fn_cols, {x}) < gradcheck::kTolerance);
    CHECK(gradcheck::max_rel_error(fn_take, {x}) < gradcheck::kTolerance);

    auto table = randn_leaf({9, 4}, rng);
    std::vector<int> ids = {1, 8, 0, 1};
    auto we = randn_leaf({4, 4}, rng, false);
    auto fn_emb = [&](Tape<double>& t) {
      return weighted_sum(t, ad::embedding(t, table, ids), we);
    };
    CHECK(gradcheck::max_rel_error(fn_emb, {table}) < gradcheck::kTolerance);

    auto y = randn_leaf({2, 3, 4}, rng);
    auto wy = randn_leaf({3, 2, 4}, rng, false);
    auto fn_perm = [&](Tape<double>& t) {
      return weighted_sum(t, ad::permute102(t, y), wy);
    };
    CHECK(gradcheck::max_rel_error(fn_perm, {y}) < gradcheck::kTolerance);

    auto wt = randn_leaf({4, 6}, rng, false);
    auto fn_tr = [&](Tape<double>& t) {
      return weighted_sum(t, ad::transpose(t, x), wt);
    };
    CHECK(gradcheck::max_rel_error(fn_tr, {x}) < gradcheck::kTolerance);

    auto wresh = randn_leaf({24}, rng, false);
    auto fn_resh = [&](Tape<double>& t) {
      return weighted_sum(t, ad::reshape(t, x, {24}), wresh);
    };
    CHECK(gradcheck::max_rel_error(fn_resh, {x}) < gradcheck::kTolerance);

    auto b2 = randn_leaf({2, 4}, rng);
    auto wcat = randn_leaf({8, 4}, rng, false);
    auto fn_cat = [&](Tape<double>& t) {
      return weighted_sum(t, ad::concat_rows(t, x, b2), wcat);
    };
    CHECK(gradcheck::max_rel_error(fn_cat, {x, b2}) < gradcheck::kTolerance);

    auto wsl = randn_leaf({3, 4}, rng, false);
    auto fn_slice = [&](Tape<double>& t) {
      return weighted_sum(t, ad::slice_rows(t, x, 1, 4), wsl);
    };
    CHECK(gradcheck::max_rel_error(fn_slice, {x}) < gradcheck::kTolerance);
  }
  SUBCASE("reductions") {
    auto x = randn_leaf({5, 3}, rng);
    auto w = randn_leaf({3}, rng, false);
    auto fn_sum = [&](Tape<double>& t) { return ad::reduce_sum(t, x); };
    auto fn_mean = [&](Tape<double>& t) { return ad::reduce_mean(t, x); };
    auto fn_m0 = [&](Tape<double>& t) {
      return weighted_sum(t, ad::mean_axis0(t, x), w);
    };
    CHECK(gradcheck::max_rel_error(fn_sum, {x}) < gradcheck::kTolerance);
    CHECK(gradcheck::max_rel_error(fn_mean, {x}) < gradcheck::kTolerance);
    CHECK(gradcheck::max_rel_error(fn_m0, {x}) < gradcheck::kTolerance);
  }
}

TEST_CASE("shape errors identify the operator") {
  Tape<float> t;
  auto a = Var<float>::leaf({2, 3}, {1, 2, 3, 4, 5, 6}, false);
  auto b = Var<float>::leaf({2, 3}, {1, 2, 3, 4, 5, 6}, false);
  try {
    ad::matmul(t, a, b);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::embedding(t, a, std::vector<int>{2}), std::invalid_argument);
  CHECK_THROWS_AS(ad::conv1d(t, a, a, 1, 0), std::invalid_argument);
}

TEST_CASE("determinism: same seed gives bit-identical forward values") {
  auto run = [] {
    Rng rng(77);
    auto x = randn_leaf({8, 8}, rng);
    auto w = randn_leaf({8, 8}, rng);
    Tape<double> t;
    auto y = ad::gelu(t, ad::matmul(t, x, w));
    return y.val();
  };
  CHECK(run() == run());
}

TEST_CASE("adamw update rule") {
  SUBCASE("single-step hand-computed value") {
    // p=1, g=1, lr=0.1: bias-corrected mhat/sqrt(vhat) is exactly 1.
    auto p = Var<double>::leaf({1}, {1.0}, true);
    p.grad()[0] = 1.0;
    ad::AdamWConfig<double> cfg;  // beta1 0.9, beta2 0.99, wd 0
    ad::AdamW<double> opt({p}, cfg);
    CHECK(opt.step(0.1));
    CHECK(p.val()[0] == doctest::Approx(0.9).epsilon(1e-6));
  }
  SUBCASE("zero gradient and zero decay leave parameters unchanged") {
    auto p = Var<double>::leaf({2}, {1.5, -2.0}, true);
    ad::AdamW<double> opt({p}, {});
    CHECK(opt.step(0.1));
    CHECK(p.val()[0] == doctest::Approx(1.5));
    CHECK(p.val()[1] == doctest::Approx(-2.0));
  }
  SUBCASE("decoupled weight decay only") {
    auto p = Var<double>::leaf({1}, {1.0}, true);
    ad::AdamWConfig<double> cfg;
    cfg.weight_decay = 0.1;
    ad::AdamW<double> opt({p}, cfg);
    CHECK(opt.step(0.1));
    CHECK(p.val()[0] == doctest::Approx(0.99).epsilon(1e-9));
  }
  SUBCASE("non-finite gradient rejects the step and counts it") {
    auto p = Var<double>::leaf({2}, {1.0, 2.0}, true);
    p.grad()[0] = std::numeric_limits<double>::quiet_NaN();
    ad::AdamW<double> opt({p}, {});
    CHECK_FALSE(opt.step(0.1));
    CHECK(opt.skipped_steps() == 1);
    CHECK(opt.step_count() == 0);
    CHECK(p.val()[0] == doctest::Approx(1.0));
  }
}

TEST_CASE("checkpoint container round-trips") {
  namespace fs = std::filesystem;
  const auto path = (fs::temp_directory_path() / "mogen_ckpt_test.bin").string();

  Rng rng(5);
  ad::ParamStore<float> ps;
  ps.create_normal("layer.w", {3, 4}, rng, 0.5f);
  ps.create_zeros("layer.b", {4});
  auto ckpt = ad::checkpoint_from_params("unit-test", ps, "{\"k\":1}");
  ad::save_checkpoint(path, ckpt);

  auto loaded = ad::load_checkpoint<float>(path);
  CHECK(loaded.module == "unit-test");
  CHECK(loaded.meta == "{\"k\":1}");
  REQUIRE(loaded.tensors.size() == 2);
  CHECK(loaded.tensors[0].name == "layer.w");
  CHECK(loaded.tensors[0].shape == ad::Shape{3, 4});
  CHECK(loaded.tensors[0].data == ps.get("layer.w").val());

  // Restoring into a fresh store with the same layout reproduces values.
  ad::ParamStore<float> ps2;
  ps2.create_zeros("layer.w", {3, 4});
  ps2.create_zeros("layer.b", {4});
  ad::load_params(loaded, ps2);
  CHECK(ps2.get("layer.w").val() == ps.get("layer.w").val());

  // Cross-precision load casts.
  auto as_double = ad::load_checkpoint<double>(path);
  CHECK(as_double.tensors[0].data[0] ==
        doctest::Approx(double(ps.get("layer.w").val()[0])));

  fs::remove(path);
}
