#pragma once

// VQ-VAE motion tokenizer: temporal CNN encoder with stride-l downsampling,
// nearest-code quantization with straight-through gradients, EMA codebook
// updates, dead-code reset, and a mirrored upsampling CNN decoder.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mogen/autodiff/checkpoint.hpp"
#include "mogen/autodiff/ops.hpp"
#include "mogen/autodiff/optim.hpp"
#include "mogen/autodiff/rng.hpp"
#include "mogen/synthworld/dataset.hpp"

namespace mogen::vq {

using ad::Tape;
using ad::Var;

struct VqvaeConfig {
  int input_dim = 18;
  int hidden = 64;
  int codebook_size = 128;  // K
  int code_dim = 64;        // d_c
  int downsample = 4;       // l; two stride-2 stages
  int res_blocks = 2;       // per stage
  double commit_beta = 0.25;
  double ema_decay = 0.99;
};

struct VqTrainStats {
  double reconstruction = 0.0;
  double commitment = 0.0;
  double perplexity = 0.0;
};

template <typename T>
class Vqvae {
 public:
  Vqvae(const VqvaeConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.downsample != 4)
      throw std::invalid_argument("vqvae: this architecture fixes downsample=4");
    Rng rng(seed);
    const T s = T(0.05);
    auto conv = [&](const std::string& name, int cin, int cout, int k) {
      params_.create_normal(name + ".w", {cout, cin, k}, rng,
                            s / static_cast<T>(std::sqrt(double(cin * k) / 8.0)));
      params_.create_zeros(name + ".b", {cout});
    };
    conv("enc.in", cfg.input_dim, cfg.hidden, 3);
    conv("enc.down0", cfg.hidden, cfg.hidden, 4);
    conv("enc.down1", cfg.hidden, cfg.hidden, 4);
    for (int sg = 0; sg < 2; ++sg)
      for (int r = 0; r < cfg.res_blocks; ++r) {
        const std::string base = "enc.res" + std::to_string(sg) + "_" + std::to_string(r);
        conv(base + ".c0", cfg.hidden, cfg.hidden, 3);
        conv(base + ".c1", cfg.hidden, cfg.hidden, 1);
      }
    conv("enc.out", cfg.hidden, cfg.code_dim, 3);

    conv("dec.in", cfg.code_dim, cfg.hidden, 3);
    conv("dec.up0", cfg.hidden, cfg.hidden, 3);
    conv("dec.up1", cfg.hidden, cfg.hidden, 3);
    for (int sg = 0; sg < 2; ++sg)
      for (int r = 0; r < cfg.res_blocks; ++r) {
        const std::string base = "dec.res" + std::to_string(sg) + "_" + std::to_string(r);
        conv(base + ".c0", cfg.hidden, cfg.hidden, 3);
        conv(base + ".c1", cfg.hidden, cfg.hidden, 1);
      }
    conv("dec.out", cfg.hidden, cfg.input_dim, 3);

    codebook_.assign(static_cast<std::size_t>(cfg.codebook_size) * cfg.code_dim, T(0));
    Rng crng(Rng::hash_combine(seed, 0xc0de));
    for (auto& v : codebook_) v = static_cast<T>(crng.normal(0.0, 0.1));
    ema_cluster_size_.assign(static_cast<std::size_t>(cfg.codebook_size), T(0));
    ema_embed_sum_ = codebook_;
    usage_count_.assign(static_cast<std::size_t>(cfg.codebook_size), 0);
  }

  const VqvaeConfig& config() const { return cfg_; }
  ad::ParamStore<T>& params() { return params_; }
  const ad::ParamStore<T>& params() const { return params_; }
  const std::vector<T>& codebook() const { return codebook_; }
  const std::vector<std::int64_t>& usage_count() const { return usage_count_; }
  bool codebook_initialized() const { return kmeans_done_; }

  // Edge-replication padding to a multiple of l; true length is kept by the
  // caller (tokens always cover ceil(T/l) groups).
  static world::MotionSequence pad_to_multiple(const world::MotionSequence& m, int l) {
    const int target = ((m.frames + l - 1) / l) * l;
    if (target == m.frames) return m;
    world::MotionSequence out = m;
    out.frames = target;
    out.data.resize(static_cast<std::size_t>(target) * m.feature_dim);
    for (int t = m.frames; t < target; ++t)
      for (int d = 0; d < m.feature_dim; ++d) out.at(t, d) = m.at(m.frames - 1, d);
    return out;
  }

  // Encoder half up to the continuous latent, [d_c, T/l].
  Var<T> encode_latent(Tape<T>& tape, const world::MotionSequence& normalized) const {
    if (normalized.frames < cfg_.downsample)
      throw std::invalid_argument("encode: motion shorter than the downsample rate");
    if (normalized.feature_dim != cfg_.input_dim)
      throw std::invalid_argument("encode: feature dim mismatch");
    const auto padded = pad_to_multiple(normalized, cfg_.downsample);
    // [T,D] row-major -> channels-first [D,T]
    std::vector<T> x(static_cast<std::size_t>(cfg_.input_dim) * padded.frames);
    for (int t = 0; t < padded.frames; ++t)
      for (int d = 0; d < cfg_.input_dim; ++d)
        x[static_cast<std::size_t>(d) * padded.frames + t] = static_cast<T>(padded.at(t, d));
    auto h = Var<T>::leaf({cfg_.input_dim, padded.frames}, std::move(x), false);
    auto c = [&](const std::string& name, const Var<T>& in, int stride, int pad) {
      return ad::conv1d(tape, in, params_.get(name + ".w"), params_.get(name + ".b"),
                        stride, pad);
    };
    auto res = [&](const std::string& base, Var<T> in) {
      auto r = c(base + ".c1", ad::gelu(tape, c(base + ".c0", in, 1, 1)), 1, 0);
      return ad::add(tape, in, r);
    };
    auto v = ad::gelu(tape, c("enc.in", h, 1, 1));
    v = ad::gelu(tape, c("enc.down0", v, 2, 1));
    for (int r = 0; r < cfg_.res_blocks; ++r) v = res("enc.res0_" + std::to_string(r), v);
    v = ad::gelu(tape, c("enc.down1", v, 2, 1));
    for (int r = 0; r < cfg_.res_blocks; ++r) v = res("enc.res1_" + std::to_string(r), v);
    return c("enc.out", v, 1, 1);  // [d_c, T/l]
  }

  // Nearest code per latent column, Euclidean distance, ties to the lowest
  // index.
  std::vector<int> assign_codes(const std::vector<T>& latent_cols, int n) const {
    std::vector<int> idx(static_cast<std::size_t>(n));
    const int dc = cfg_.code_dim;
    for (int t = 0; t < n; ++t) {
      T best = std::numeric_limits<T>::max();
      int arg = 0;
      for (int k = 0; k < cfg_.codebook_size; ++k) {
        T d2 = T(0);
        for (int j = 0; j < dc; ++j) {
          const T diff = latent_cols[static_cast<std::size_t>(t) * dc + j] -
                         codebook_[static_cast<std::size_t>(k) * dc + j];
          d2 += diff * diff;
        }
        if (d2 < best) {
          best = d2;
          arg = k;
        }
      }
      idx[static_cast<std::size_t>(t)] = arg;
    }
    return idx;
  }

  // Latent [d_c, n] as column vectors [n, d_c].
  static std::vector<T> latent_columns(const Var<T>& latent) {
    const int dc = latent.dim(0), n = latent.dim(1);
    std::vector<T> cols(static_cast<std::size_t>(n) * dc);
    for (int j = 0; j < dc; ++j)
      for (int t = 0; t < n; ++t)
        cols[static_cast<std::size_t>(t) * dc + j] =
            latent.val()[static_cast<std::size_t>(j) * n + t];
    return cols;
  }

  std::vector<int> encode(const world::MotionSequence& normalized) const {
    Tape<T> tape;
    auto latent = encode_latent(tape, normalized);
    return assign_codes(latent_columns(latent), latent.dim(1));
  }

  // Decoder from latent columns [d_c, n] to a normalized motion [n*l, D].
  Var<T> decode_latent(Tape<T>& tape, const Var<T>& z) const {
    auto c = [&](const std::string& name, const Var<T>& in, int stride, int pad) {
      return ad::conv1d(tape, in, params_.get(name + ".w"), params_.get(name + ".b"),
                        stride, pad);
    };
    auto res = [&](const std::string& base, Var<T> in) {
      auto r = c(base + ".c1", ad::gelu(tape, c(base + ".c0", in, 1, 1)), 1, 0);
      return ad::add(tape, in, r);
    };
    auto up2 = [&](const Var<T>& in) {
      std::vector<int> idx(static_cast<std::size_t>(in.dim(1)) * 2);
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i / 2);
      return ad::gather_cols(tape, in, idx);
    };
    auto v = ad::gelu(tape, c("dec.in", z, 1, 1));
    v = ad::gelu(tape, c("dec.up0", up2(v), 1, 1));
    for (int r = 0; r < cfg_.res_blocks; ++r) v = res("dec.res0_" + std::to_string(r), v);
    v = ad::gelu(tape, c("dec.up1", up2(v), 1, 1));
    for (int r = 0; r < cfg_.res_blocks; ++r) v = res("dec.res1_" + std::to_string(r), v);
    return c("dec.out", v, 1, 1);  // [D, n*l]
  }

  Var<T> codebook_lookup(Tape<T>& tape, const std::vector<int>& tokens) const {
    for (int id : tokens)
      if (id < 0 || id >= cfg_.codebook_size)
        throw std::invalid_argument("decode: token index out of range");
    auto book = Var<T>::leaf({cfg_.codebook_size, cfg_.code_dim}, codebook_, false);
    auto rows = ad::gather_rows(tape, book, tokens);  // [n, d_c]
    return ad::transpose(tape, rows);                 // [d_c, n]
  }

  // Normalized-space decode; de-normalization is the caller's concern so the
  // tokenizer stays independent of dataset statistics.
  world::MotionSequence decode(const std::vector<int>& tokens, int fps = 20) const {
    if (tokens.empty()) throw std::invalid_argument("decode: empty token sequence");
    Tape<T> tape;
    auto out = decode_latent(tape, codebook_lookup(tape, tokens));
    world::MotionSequence m;
    m.frames = out.dim(1);
    m.feature_dim = cfg_.input_dim;
    m.fps = fps;
    m.data.resize(static_cast<std::size_t>(m.frames) * m.feature_dim);
    for (int t = 0; t < m.frames; ++t)
      for (int d = 0; d < cfg_.input_dim; ++d)
        m.at(t, d) = static_cast<float>(
            out.val()[static_cast<std::size_t>(d) * m.frames + t]);
    return m;
  }

  // One optimizer step over a batch. The quantized path uses the straight-
  // through estimator; the codebook itself learns by EMA, not gradient.
  VqTrainStats train_step(const std::vector<const world::MotionSequence*>& batch,
                          ad::AdamW<T>& opt, T lr, bool quantize = true) {
    if (batch.empty()) throw std::invalid_argument("vqvae: empty batch");
    Tape<T> tape;
    Var<T> recon_sum = Var<T>::scalar(T(0), false);
    Var<T> commit_sum = Var<T>::scalar(T(0), false);
    std::vector<T> batch_latents;  // columns, for EMA/k-means
    std::vector<int> batch_codes;

    for (const auto* mp : batch) {
      auto z = encode_latent(tape, *mp);
      const int n = z.dim(1);
      Var<T> dec_in = z;
      if (quantize) {
        auto cols = latent_columns(z);
        if (!kmeans_done_) init_codebook_kmeans(cols, n);
        auto idx = assign_codes(cols, n);
        batch_latents.insert(batch_latents.end(), cols.begin(), cols.end());
        batch_codes.insert(batch_codes.end(), idx.begin(), idx.end());
        Tape<T> scratch;  // z_q is a constant w.r.t. the gradient step
        auto zq = codebook_lookup(scratch, idx);
        auto zq_const = Var<T>::leaf(zq.shape(), zq.val(), false);
        // Straight-through: z + stopgrad(z_q - z)
        auto delta = ad::sub(tape, zq_const, z);
        dec_in = ad::add(tape, z, delta.detach());
        commit_sum = ad::add(
            tape, commit_sum,
            ad::reduce_mean(tape, ad::sqdiff(tape, z, zq_const)));
      }
      auto x_hat = decode_latent(tape, dec_in);
      const auto padded = pad_to_multiple(*mp, cfg_.downsample);
      std::vector<T> target(static_cast<std::size_t>(cfg_.input_dim) * padded.frames);
      for (int t = 0; t < padded.frames; ++t)
        for (int d = 0; d < cfg_.input_dim; ++d)
          target[static_cast<std::size_t>(d) * padded.frames + t] =
              static_cast<T>(padded.at(t, d));
      auto tgt = Var<T>::leaf({cfg_.input_dim, padded.frames}, std::move(target), false);
      recon_sum = ad::add(tape, recon_sum,
                          ad::reduce_mean(tape, ad::sqdiff(tape, x_hat, tgt)));
    }
    const T inv_b = T(1) / static_cast<T>(batch.size());
    auto recon = ad::scale(tape, recon_sum, inv_b);
    auto commit = ad::scale(tape, commit_sum, inv_b);
    auto loss =
        ad::add(tape, recon, ad::scale(tape, commit, static_cast<T>(cfg_.commit_beta)));

    VqTrainStats stats;
    stats.reconstruction = static_cast<double>(recon.item());
    stats.commitment = static_cast<double>(commit.item());
    if (std::isfinite(stats.reconstruction + stats.commitment)) {
      params_.zero_grad();
      tape.backward(loss);
      opt.step(lr);
    } else {
      ++aborted_steps_;
    }
    if (quantize && !batch_codes.empty()) {
      ema_update(batch_latents, batch_codes);
      stats.perplexity = perplexity(batch_codes);
      last_batch_latents_ = std::move(batch_latents);
    }
    return stats;
  }

  // Re-seed codes unused since the last reset from recent encoder outputs.
  int reset_dead_codes(std::uint64_t seed) {
    if (last_batch_latents_.empty()) return 0;
    const int dc = cfg_.code_dim;
    const int n = static_cast<int>(last_batch_latents_.size()) / dc;
    Rng rng(seed);
    int resets = 0;
    for (int k = 0; k < cfg_.codebook_size; ++k) {
      if (usage_count_[static_cast<std::size_t>(k)] != 0) continue;
      const int pick = rng.uniform_int(n);
      for (int j = 0; j < dc; ++j)
        codebook_[static_cast<std::size_t>(k) * dc + j] =
            last_batch_latents_[static_cast<std::size_t>(pick) * dc + j];
      ema_cluster_size_[static_cast<std::size_t>(k)] = T(1);
      for (int j = 0; j < dc; ++j)
        ema_embed_sum_[static_cast<std::size_t>(k) * dc + j] =
            codebook_[static_cast<std::size_t>(k) * dc + j];
      ++resets;
    }
    std::fill(usage_count_.begin(), usage_count_.end(), 0);
    return resets;
  }

  double perplexity(const std::vector<int>& codes) const {
    std::vector<double> p(static_cast<std::size_t>(cfg_.codebook_size), 0.0);
    for (int c : codes) p[static_cast<std::size_t>(c)] += 1.0;
    double h = 0.0;
    for (double& v : p) {
      v /= static_cast<double>(codes.size());
      if (v > 0.0) h -= v * std::log(v);
    }
    return std::exp(h);
  }

  std::int64_t aborted_steps() const { return aborted_steps_; }

  // Encoder outputs captured during the most recent quantized train step;
  // dead-code reset draws from these.
  const std::vector<T>& last_batch_latents() const { return last_batch_latents_; }

  ad::Checkpoint<T> to_checkpoint(std::string meta = "{}") const {
    auto ckpt = ad::checkpoint_from_params("motionvq", params_, std::move(meta));
    ckpt.tensors.push_back({"codebook.vectors",
                            {cfg_.codebook_size, cfg_.code_dim}, codebook_});
    ckpt.tensors.push_back({"codebook.ema_n", {cfg_.codebook_size}, ema_cluster_size_});
    ckpt.tensors.push_back({"codebook.ema_sum",
                            {cfg_.codebook_size, cfg_.code_dim}, ema_embed_sum_});
    return ckpt;
  }

  void from_checkpoint(const ad::Checkpoint<T>& ckpt) {
    ad::load_params(ckpt, params_);
    const auto* cb = ckpt.find("codebook.vectors");
    const auto* en = ckpt.find("codebook.ema_n");
    const auto* es = ckpt.find("codebook.ema_sum");
    if (!cb || !en || !es)
      throw std::runtime_error("vqvae: checkpoint missing codebook tensors");
    codebook_ = cb->data;
    ema_cluster_size_ = en->data;
    ema_embed_sum_ = es->data;
    kmeans_done_ = true;
  }

 private:
  void init_codebook_kmeans(const std::vector<T>& cols, int n) {
    const int dc = cfg_.code_dim;
    const int k = cfg_.codebook_size;
    Rng rng(0x6b6d65616e73ull);
    // Start from distinct random samples (with replacement when n < K).
    for (int c = 0; c < k; ++c) {
      const int pick = n > 0 ? rng.uniform_int(n) : 0;
      for (int j = 0; j < dc; ++j)
        codebook_[static_cast<std::size_t>(c) * dc + j] =
            cols[static_cast<std::size_t>(pick) * dc + j];
    }
    for (int iter = 0; iter < 8; ++iter) {
      const auto assign = assign_codes(cols, n);
      std::vector<T> sums(codebook_.size(), T(0));
      std::vector<int> counts(static_cast<std::size_t>(k), 0);
      for (int t = 0; t < n; ++t) {
        const int c = assign[static_cast<std::size_t>(t)];
        ++counts[static_cast<std::size_t>(c)];
        for (int j = 0; j < dc; ++j)
          sums[static_cast<std::size_t>(c) * dc + j] +=
              cols[static_cast<std::size_t>(t) * dc + j];
      }
      for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) {
          const int pick = rng.uniform_int(n);
          for (int j = 0; j < dc; ++j)
            codebook_[static_cast<std::size_t>(c) * dc + j] =
                cols[static_cast<std::size_t>(pick) * dc + j];
        } else {
          for (int j = 0; j < dc; ++j)
            codebook_[static_cast<std::size_t>(c) * dc + j] =
                sums[static_cast<std::size_t>(c) * dc + j] /
                static_cast<T>(counts[static_cast<std::size_t>(c)]);
        }
      }
    }
    // Seed the EMA state so early updates do not collapse fresh centroids.
    const auto assign = assign_codes(cols, n);
    std::fill(ema_cluster_size_.begin(), ema_cluster_size_.end(), T(0));
    std::fill(ema_embed_sum_.begin(), ema_embed_sum_.end(), T(0));
    for (int t = 0; t < n; ++t) {
      const int c = assign[static_cast<std::size_t>(t)];
      ema_cluster_size_[static_cast<std::size_t>(c)] += T(1);
      for (int j = 0; j < dc; ++j)
        ema_embed_sum_[static_cast<std::size_t>(c) * dc + j] +=
            cols[static_cast<std::size_t>(t) * dc + j];
    }
    kmeans_done_ = true;
  }

  void ema_update(const std::vector<T>& cols, const std::vector<int>& codes) {
    const int dc = cfg_.code_dim;
    const int k = cfg_.codebook_size;
    const T g = static_cast<T>(cfg_.ema_decay);
    std::vector<T> sums(codebook_.size(), T(0));
    std::vector<T> counts(static_cast<std::size_t>(k), T(0));
    for (std::size_t t = 0; t < codes.size(); ++t) {
      const int c = codes[t];
      counts[static_cast<std::size_t>(c)] += T(1);
      ++usage_count_[static_cast<std::size_t>(c)];
      for (int j = 0; j < dc; ++j)
        sums[static_cast<std::size_t>(c) * dc + j] += cols[t * dc + j];
    }
    if (cfg_.ema_decay >= 1.0) return;  // decay 1: moments frozen, codebook fixed
    T total = T(0);
    for (int c = 0; c < k; ++c) {
      ema_cluster_size_[static_cast<std::size_t>(c)] =
          g * ema_cluster_size_[static_cast<std::size_t>(c)] +
          (T(1) - g) * counts[static_cast<std::size_t>(c)];
      total += ema_cluster_size_[static_cast<std::size_t>(c)];
      for (int j = 0; j < dc; ++j)
        ema_embed_sum_[static_cast<std::size_t>(c) * dc + j] =
            g * ema_embed_sum_[static_cast<std::size_t>(c) * dc + j] +
            (T(1) - g) * sums[static_cast<std::size_t>(c) * dc + j];
    }
    // Laplace-smoothed cluster sizes keep rare codes finite.
    const T eps = T(1e-5);
    for (int c = 0; c < k; ++c) {
      const T nk = (ema_cluster_size_[static_cast<std::size_t>(c)] + eps) /
                   (total + static_cast<T>(k) * eps) * total;
      for (int j = 0; j < dc; ++j)
        codebook_[static_cast<std::size_t>(c) * dc + j] =
            ema_embed_sum_[static_cast<std::size_t>(c) * dc + j] / nk;
    }
  }

  VqvaeConfig cfg_;
  ad::ParamStore<T> params_;
  std::vector<T> codebook_;          // [K, d_c]
  std::vector<T> ema_cluster_size_;  // [K]
  std::vector<T> ema_embed_sum_;     // [K, d_c]
  std::vector<std::int64_t> usage_count_;
  std::vector<T> last_batch_latents_;
  bool kmeans_done_ = false;
  std::int64_t aborted_steps_ = 0;
};

}  // namespace mogen::vq
