#pragma once

// Contrastive text/motion encoders defining the shared metric space. The
// text side is a small non-causal transformer over the closed vocabulary;
// the motion side is a strided temporal CNN. Both pool to d_e.

#include <cmath>
#include <string>
#include <vector>

#include "mogen/autodiff/checkpoint.hpp"
#include "mogen/autodiff/ops.hpp"
#include "mogen/autodiff/optim.hpp"
#include "mogen/autodiff/rng.hpp"
#include "mogen/nn/layers.hpp"
#include "mogen/synthworld/dataset.hpp"

namespace mogen::enc {

using ad::Tape;
using ad::Var;

struct DualEncoderConfig {
  int vocab_size = 37;
  int text_dim = 64;
  int text_layers = 2;
  int text_heads = 4;
  int motion_dim = 18;
  int motion_hidden = 64;
  int embed_dim = 64;  // d_e
  double margin = 10.0;
  double negative_fraction = 0.5;
  int max_text_len = 16;
};

struct ContrastiveStats {
  double loss = 0.0;
  double mean_matched_distance = 0.0;
  double mean_mismatched_distance = 0.0;
};

// Eq.-style two-regime hinge: matched pairs (y=0) are pulled together,
// mismatched pairs (y=1) pushed beyond the margin.
template <typename T>
Var<T> contrastive_loss(Tape<T>& tape, const Var<T>& f_t, const Var<T>& f_m,
                        int y, T margin) {
  if (f_t.numel() != f_m.numel())
    throw std::invalid_argument("contrastive: embedding dimension mismatch");
  auto diff = ad::sub(tape, f_t, f_m);
  auto d2 = ad::reduce_sum(tape, ad::mul(tape, diff, diff));
  if (y == 0) return d2;
  auto d = ad::vsqrt(tape, d2);
  auto hinge = ad::relu(tape, ad::add(tape, ad::scale(tape, d, T(-1)),
                                      Var<T>::scalar(margin, false)));
  return ad::mul(tape, hinge, hinge);
}

template <typename T>
class DualEncoder {
 public:
  DualEncoder(const DualEncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    const T s = T(0.05);
    params_.create_normal("text.embed", {cfg.vocab_size, cfg.text_dim}, rng, s);
    params_.create_normal("text.pos", {cfg.max_text_len, cfg.text_dim}, rng, s);
    for (int l = 0; l < cfg.text_layers; ++l)
      text_blocks_.emplace_back(params_, "text.blk" + std::to_string(l),
                                cfg.text_dim, cfg.text_heads, /*causal=*/false,
                                rng, s);
    text_ln_ = nn::LayerNorm<T>(params_, "text.ln", cfg.text_dim);
    // Projection scale puts random-init pair distances just under the
    // margin, so the hinge starts partially saturated instead of inflating
    // every embedding uniformly.
    text_proj_ = nn::Linear<T>(params_, "text.proj", cfg.text_dim, cfg.embed_dim,
                               rng, T(0.6 / std::sqrt(double(cfg.text_dim))));

    auto conv = [&](const std::string& name, int cin, int cout, int k) {
      params_.create_normal(name + ".w", {cout, cin, k}, rng, s);
      params_.create_zeros(name + ".b", {cout});
    };
    conv("motion.c0", cfg.motion_dim, cfg.motion_hidden, 4);
    conv("motion.c1", cfg.motion_hidden, cfg.motion_hidden, 4);
    conv("motion.c2", cfg.motion_hidden, cfg.motion_hidden, 3);
    motion_ln_ = nn::LayerNorm<T>(params_, "motion.ln", cfg.motion_hidden);
    motion_proj_ = nn::Linear<T>(params_, "motion.proj", cfg.motion_hidden,
                                 cfg.embed_dim, rng,
                                 T(0.6 / std::sqrt(double(cfg.motion_hidden))));
  }

  const DualEncoderConfig& config() const { return cfg_; }
  ad::ParamStore<T>& params() { return params_; }
  const ad::ParamStore<T>& params() const { return params_; }

  Var<T> embed_text_var(Tape<T>& tape, const world::PromptRecord& prompt) const {
    if (prompt.token_ids.empty())
      throw std::invalid_argument("embed_text: empty prompt");
    for (int id : prompt.token_ids)
      if (id < 0 || id >= cfg_.vocab_size)
        throw std::invalid_argument("embed_text: token outside vocabulary");
    std::vector<int> ids = prompt.token_ids;
    if (static_cast<int>(ids.size()) > cfg_.max_text_len)
      ids.resize(static_cast<std::size_t>(cfg_.max_text_len));
    std::vector<int> pos(ids.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
    auto h = ad::add(tape, ad::embedding(tape, params_.get("text.embed"), ids),
                     ad::embedding(tape, params_.get("text.pos"), pos));
    for (const auto& blk : text_blocks_) h = blk(tape, h);
    auto pooled = ad::mean_axis0(tape, text_ln_(tape, h));  // [text_dim]
    auto row = ad::reshape(tape, pooled, {1, cfg_.text_dim});
    return ad::reshape(tape, text_proj_(tape, row), {cfg_.embed_dim});
  }

  Var<T> embed_motion_var(Tape<T>& tape, const world::MotionSequence& normalized) const {
    if (normalized.feature_dim != cfg_.motion_dim)
      throw std::invalid_argument("embed_motion: feature dim mismatch");
    if (!normalized.finite())
      throw std::invalid_argument("embed_motion: non-finite input");
    // Edge-pad very short clips so the strided convs stay valid.
    world::MotionSequence m = normalized;
    while (m.frames < 8) {
      m.data.insert(m.data.end(), m.data.end() - m.feature_dim, m.data.end());
      m.frames += 1;
    }
    std::vector<T> x(static_cast<std::size_t>(cfg_.motion_dim) * m.frames);
    for (int t = 0; t < m.frames; ++t)
      for (int d = 0; d < cfg_.motion_dim; ++d)
        x[static_cast<std::size_t>(d) * m.frames + t] = static_cast<T>(m.at(t, d));
    auto h = Var<T>::leaf({cfg_.motion_dim, m.frames}, std::move(x), false);
    auto c = [&](const std::string& name, const Var<T>& in, int stride, int pad) {
      return ad::conv1d(tape, in, params_.get(name + ".w"),
                        params_.get(name + ".b"), stride, pad);
    };
    auto v = ad::gelu(tape, c("motion.c0", h, 2, 1));
    v = ad::gelu(tape, c("motion.c1", v, 2, 1));
    v = ad::gelu(tape, c("motion.c2", v, 1, 1));
    auto pooled = ad::mean_axis0(tape, ad::transpose(tape, v));  // [hidden]
    auto row = motion_ln_(tape, ad::reshape(tape, pooled, {1, cfg_.motion_hidden}));
    return ad::reshape(tape, motion_proj_(tape, row), {cfg_.embed_dim});
  }

  std::vector<T> embed_text(const world::PromptRecord& prompt) const {
    Tape<T> tape;
    return embed_text_var(tape, prompt).val();
  }

  std::vector<T> embed_motion(const world::MotionSequence& normalized) const {
    Tape<T> tape;
    return embed_motion_var(tape, normalized).val();
  }

  // One contrastive step over matched pairs; a derangement of the motion
  // assignment supplies the mismatched half of the batch.
  ContrastiveStats train_step(
      const std::vector<const world::PromptRecord*>& prompts,
      const std::vector<const world::MotionSequence*>& motions_normalized,
      ad::AdamW<T>& opt, T lr, Rng& rng) {
    const std::size_t b = prompts.size();
    if (b < 2 || motions_normalized.size() != b)
      throw std::invalid_argument("encoders: batch needs >= 2 matched pairs");
    const int negatives = static_cast<int>(std::lround(
        static_cast<double>(b) * cfg_.negative_fraction));
    // Shuffle-derangement: offset by a nonzero rotation.
    const int shift = 1 + rng.uniform_int(static_cast<int>(b) - 1);

    Tape<T> tape;
    std::vector<Var<T>> f_t(b), f_m(b);
    for (std::size_t i = 0; i < b; ++i) {
      f_t[i] = embed_text_var(tape, *prompts[i]);
      f_m[i] = embed_motion_var(tape, *motions_normalized[i]);
    }
    Var<T> loss_sum = Var<T>::scalar(T(0), false);
    ContrastiveStats stats;
    int matched_n = 0, mismatched_n = 0;
    for (std::size_t i = 0; i < b; ++i) {
      const bool neg = static_cast<int>(i) < negatives;
      const std::size_t j = neg ? (i + static_cast<std::size_t>(shift)) % b : i;
      auto li = contrastive_loss(tape, f_t[i], f_m[j], neg ? 1 : 0,
                                 static_cast<T>(cfg_.margin));
      loss_sum = ad::add(tape, loss_sum, li);
      double d2 = 0.0;
      for (int k = 0; k < cfg_.embed_dim; ++k) {
        const double diff = double(f_t[i].val()[static_cast<std::size_t>(k)]) -
                            double(f_m[j].val()[static_cast<std::size_t>(k)]);
        d2 += diff * diff;
      }
      if (neg) {
        stats.mean_mismatched_distance += std::sqrt(d2);
        ++mismatched_n;
      } else {
        stats.mean_matched_distance += std::sqrt(d2);
        ++matched_n;
      }
    }
    auto loss = ad::scale(tape, loss_sum, T(1) / static_cast<T>(b));
    stats.loss = static_cast<double>(loss.item());
    if (matched_n) stats.mean_matched_distance /= matched_n;
    if (mismatched_n) stats.mean_mismatched_distance /= mismatched_n;
    if (std::isfinite(stats.loss)) {
      params_.zero_grad();
      tape.backward(loss);
      opt.step(lr);
    }
    return stats;
  }

  ad::Checkpoint<T> to_checkpoint(std::string meta = "{}") const {
    return ad::checkpoint_from_params("dualenc", params_, std::move(meta));
  }
  void from_checkpoint(const ad::Checkpoint<T>& ckpt) {
    ad::load_params(ckpt, params_);
  }

 private:
  DualEncoderConfig cfg_;
  ad::ParamStore<T> params_;
  std::vector<nn::TransformerBlock<T>> text_blocks_;
  nn::LayerNorm<T> text_ln_;
  nn::Linear<T> text_proj_;
  nn::LayerNorm<T> motion_ln_;
  nn::Linear<T> motion_proj_;
};

}  // namespace mogen::enc
