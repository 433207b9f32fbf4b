#pragma once

// Small reusable layers on top of the autodiff ops: linear, layer norm,
// multi-head self-attention, and a pre-LN transformer block.

#include <cmath>
#include <string>

#include "mogen/autodiff/ops.hpp"
#include "mogen/autodiff/optim.hpp"

namespace mogen::nn {

using ad::Tape;
using ad::Var;

// Named in one place so float training and double gradient checks agree.
inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct Linear {
  Var<T> w;  // [din, dout]
  Var<T> b;  // [dout]

  Linear() = default;
  Linear(ad::ParamStore<T>& ps, const std::string& name, int din, int dout,
         Rng& rng, T init_std) {
    w = ps.create_normal(name + ".w", {din, dout}, rng, init_std);
    b = ps.create_zeros(name + ".b", {dout});
  }

  Var<T> operator()(Tape<T>& t, const Var<T>& x) const {
    return ad::add(t, ad::matmul(t, x, w), b);
  }
};

template <typename T>
struct LayerNorm {
  Var<T> gamma, beta;

  LayerNorm() = default;
  LayerNorm(ad::ParamStore<T>& ps, const std::string& name, int d) {
    gamma = ps.create_full(name + ".g", {d}, T(1));
    beta = ps.create_zeros(name + ".b", {d});
  }

  Var<T> operator()(Tape<T>& t, const Var<T>& x) const {
    return ad::layer_norm(t, x, gamma, beta, static_cast<T>(kLayerNormEps));
  }
};

// Additive causal mask tile for h heads over an s x s score matrix.
template <typename T>
Var<T> causal_mask(int heads, int s) {
  std::vector<T> vals(static_cast<std::size_t>(heads) * s * s, T(0));
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < s; ++i)
      for (int j = i + 1; j < s; ++j)
        vals[(static_cast<std::size_t>(h) * s + i) * s + j] = T(-1e9);
  return Var<T>::leaf({heads, s, s}, std::move(vals), false);
}

template <typename T>
struct SelfAttention {
  Linear<T> wq, wk, wv, wo;
  int heads = 1;
  int dim = 0;
  bool causal = true;

  SelfAttention() = default;
  SelfAttention(ad::ParamStore<T>& ps, const std::string& name, int d, int h,
                bool causal_, Rng& rng, T init_std)
      : wq(ps, name + ".wq", d, d, rng, init_std),
        wk(ps, name + ".wk", d, d, rng, init_std),
        wv(ps, name + ".wv", d, d, rng, init_std),
        wo(ps, name + ".wo", d, d, rng, init_std),
        heads(h),
        dim(d),
        causal(causal_) {
    if (d % h != 0)
      throw std::invalid_argument("attention: dim not divisible by heads");
  }

  // x: [S, dim]
  Var<T> operator()(Tape<T>& t, const Var<T>& x) const {
    const int s = x.dim(0);
    const int dh = dim / heads;
    auto split = [&](const Var<T>& m) {
      return ad::permute102(t, ad::reshape(t, m, {s, heads, dh}));
    };
    auto q = split(wq(t, x));
    auto k = split(wk(t, x));
    auto v = split(wv(t, x));
    auto scores = ad::scale(t, ad::bmm(t, q, k, /*trans_b=*/true),
                            T(1) / static_cast<T>(std::sqrt(double(dh))));
    if (causal) scores = ad::add(t, scores, causal_mask<T>(heads, s));
    auto attn = ad::softmax(t, scores);
    auto ctx = ad::bmm(t, attn, v);  // [h, S, dh]
    auto merged = ad::reshape(t, ad::permute102(t, ctx), {s, dim});
    return wo(t, merged);
  }
};

// Pre-LN block: x + attn(ln1(x)); x + mlp(ln2(x)).
template <typename T>
struct TransformerBlock {
  LayerNorm<T> ln1, ln2;
  SelfAttention<T> attn;
  Linear<T> fc1, fc2;

  TransformerBlock() = default;
  TransformerBlock(ad::ParamStore<T>& ps, const std::string& name, int d,
                   int heads, bool causal, Rng& rng, T init_std)
      : ln1(ps, name + ".ln1", d),
        ln2(ps, name + ".ln2", d),
        attn(ps, name + ".attn", d, heads, causal, rng, init_std),
        fc1(ps, name + ".fc1", d, 4 * d, rng, init_std),
        fc2(ps, name + ".fc2", 4 * d, d, rng, init_std) {}

  Var<T> operator()(Tape<T>& t, const Var<T>& x) const {
    auto h = ad::add(t, x, attn(t, ln1(t, x)));
    auto m = fc2(t, ad::gelu(t, fc1(t, ln2(t, h))));
    return ad::add(t, h, m);
  }
};

// Sinusoidal positional table, [max_len, d], not trained.
template <typename T>
std::vector<T> sinusoidal_table(int max_len, int d) {
  std::vector<T> vals(static_cast<std::size_t>(max_len) * d);
  for (int p = 0; p < max_len; ++p)
    for (int i = 0; i < d; ++i) {
      const double angle = p / std::pow(10000.0, double(2 * (i / 2)) / d);
      vals[static_cast<std::size_t>(p) * d + i] =
          static_cast<T>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }
  return vals;
}

}  // namespace mogen::nn
