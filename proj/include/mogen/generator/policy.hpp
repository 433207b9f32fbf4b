#pragma once

// Autoregressive transformer over motion tokens conditioned on a text
// embedding start token, with an end-of-sequence symbol and a value head
// sharing the first shared_depth layers (optionally gradient-isolated via
// detach). Doubles as the trainable policy and, frozen, the reference.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "mogen/autodiff/checkpoint.hpp"
#include "mogen/autodiff/ops.hpp"
#include "mogen/autodiff/optim.hpp"
#include "mogen/autodiff/rng.hpp"
#include "mogen/nn/layers.hpp"
#include "mogen/synthworld/motion.hpp"
#include "mogen/textcond/textcond.hpp"

namespace mogen::gen {

using ad::Tape;
using ad::Var;

struct PolicyConfig {
  int codebook_size = 128;  // K; symbol set is K+1 with end token id == K
  int layers = 4;
  int dim = 128;
  int heads = 8;
  int shared_depth = 3;  // value head branches after this many blocks
  int max_length = 64;   // maximum generated tokens (including the end token)
  bool detach_value_trunk = true;
  int cond_vocab = 37;
  int cond_max_len = 16;
  double init_std = 0.02;

  int end_token() const { return codebook_size; }
  int symbols() const { return codebook_size + 1; }

  void validate() const {
    if (layers < 1 || dim < 1 || heads < 1 || dim % heads != 0)
      throw std::invalid_argument("policy: bad transformer dimensions");
    if (shared_depth < 1 || shared_depth > layers)
      throw std::invalid_argument("policy: shared_depth out of range");
    if (max_length < 1) throw std::invalid_argument("policy: bad max_length");
  }
};

enum class Termination { end_token, max_length };

struct GenerationResult {
  std::vector<int> token_ids;     // actions, including the end token if emitted
  std::vector<float> log_probs;   // per step, under the sampling distribution
  std::vector<float> values;      // per step, V(s_t)
  Termination termination = Termination::max_length;

  // Motion tokens only (end token stripped).
  std::vector<int> motion_tokens() const {
    auto ids = token_ids;
    if (termination == Termination::end_token && !ids.empty()) ids.pop_back();
    return ids;
  }
};

template <typename T>
struct ScoreResult {
  Var<T> log_probs;       // [m] log pi(a_t | s_t) of the given actions
  Var<T> values;          // [m]
  Var<T> log_probs_full;  // [m, K+1]
};

template <typename T>
class PolicyModel {
 public:
  PolicyModel(const PolicyConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    const T s = static_cast<T>(cfg_.init_std);
    cond_ = textcond::TextConditioner<T>(params_, "cond", cfg_.cond_vocab, cfg_.dim,
                                         cfg_.cond_max_len, rng, s);
    tok_embed_ = params_.create_normal("tok_embed", {cfg_.symbols(), cfg_.dim}, rng, s);
    pos_embed_ =
        params_.create_normal("pos_embed", {cfg_.max_length + 1, cfg_.dim}, rng, s);
    for (int l = 0; l < cfg_.layers; ++l)
      blocks_.emplace_back(params_, "blk" + std::to_string(l), cfg_.dim, cfg_.heads,
                           /*causal=*/true, rng, s);
    final_ln_ = nn::LayerNorm<T>(params_, "final_ln", cfg_.dim);
    logit_head_ = nn::Linear<T>(params_, "logit_head", cfg_.dim, cfg_.symbols(), rng, s);
    value_ln_ = nn::LayerNorm<T>(params_, "value.ln", cfg_.dim);
    value_fc1_ = nn::Linear<T>(params_, "value.fc1", cfg_.dim, cfg_.dim, rng, s);
    value_fc2_ = nn::Linear<T>(params_, "value.fc2", cfg_.dim, 1, rng, s);
  }

  const PolicyConfig& config() const { return cfg_; }
  ad::ParamStore<T>& params() { return params_; }
  const ad::ParamStore<T>& params() const { return params_; }

  // Names of the conditioning sub-module's parameters (frozen during RL).
  static bool is_conditioner_param(const std::string& name) {
    return name.rfind("cond.", 0) == 0;
  }

  // Trunk hidden states for position t, the state before choosing action
  // a_t: row 0 is the conditioning embedding, row i>0 embeds actions[i-1].
  // Returns {trunk_mid (after shared_depth blocks), trunk_out (all blocks)}.
  std::pair<Var<T>, Var<T>> trunk(Tape<T>& tape, const world::PromptRecord& prompt,
                                  const std::vector<int>& actions) const {
    const int m = static_cast<int>(actions.size());
    if (m < 1) throw std::invalid_argument("policy: need at least one action");
    if (m > cfg_.max_length)
      throw std::invalid_argument("policy: prefix exceeds max_length");
    for (int i = 0; i < m; ++i) {
      if (actions[static_cast<std::size_t>(i)] < 0 ||
          actions[static_cast<std::size_t>(i)] >= cfg_.symbols())
        throw std::invalid_argument("policy: action id out of range");
      if (actions[static_cast<std::size_t>(i)] == cfg_.end_token() && i + 1 < m)
        throw std::invalid_argument("policy: end token at non-final position");
    }
    auto x0 = cond_(tape, prompt);  // [1, dim]
    Var<T> h;
    if (m > 1) {
      std::vector<int> prev(actions.begin(), actions.end() - 1);
      h = ad::concat_rows(tape, x0, ad::embedding(tape, tok_embed_, prev));
    } else {
      h = x0;
    }
    std::vector<int> pos_ids(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) pos_ids[static_cast<std::size_t>(i)] = i;
    h = ad::add(tape, h, ad::gather_rows(tape, pos_embed_, pos_ids));
    Var<T> mid;
    for (int l = 0; l < cfg_.layers; ++l) {
      h = blocks_[static_cast<std::size_t>(l)](tape, h);
      if (l + 1 == cfg_.shared_depth) mid = h;
    }
    return {mid, h};
  }

  // Teacher-forced scoring of a stored action sequence.
  ScoreResult<T> score(Tape<T>& tape, const world::PromptRecord& prompt,
                       const std::vector<int>& actions) const {
    auto [mid, out] = trunk(tape, prompt, actions);
    auto logits = logit_head_(tape, final_ln_(tape, out));  // [m, K+1]
    auto logp_full = ad::log_softmax(tape, logits);
    auto logp = ad::take_per_row(tape, logp_full, actions);
    auto vin = cfg_.detach_value_trunk ? mid.detach() : mid;
    auto vh = value_fc2_(tape, ad::gelu(tape, value_fc1_(tape, value_ln_(tape, vin))));
    auto values = ad::reshape(tape, vh, {static_cast<int>(actions.size())});
    return {logp, values, logp_full};
  }

  // Next-token distribution after an (possibly empty) prefix of actions.
  std::vector<T> next_logits(const world::PromptRecord& prompt,
                             const std::vector<int>& prefix) const {
    for (int id : prefix)
      if (id == cfg_.end_token())
        throw std::invalid_argument("policy: end token inside prefix");
    if (static_cast<int>(prefix.size()) >= cfg_.max_length)
      throw std::invalid_argument("policy: prefix exceeds max_length");
    Tape<T> tape;
    std::vector<int> actions = prefix;
    actions.push_back(0);  // placeholder action at the queried position
    auto [mid, out] = trunk(tape, prompt, actions);
    (void)mid;
    auto logits = logit_head_(tape, final_ln_(tape, out));
    const int m = logits.dim(0), v = logits.dim(1);
    std::vector<T> row(static_cast<std::size_t>(v));
    for (int j = 0; j < v; ++j)
      row[static_cast<std::size_t>(j)] =
        logits.val()[static_cast<std::size_t>(m - 1) * v + j];
    return row;
  }

  // Ancestral sampling with an incremental attention cache. Log-probs are
  // taken from the sampling distribution (tempered); values come from the
  // shared trunk at each visited state.
  GenerationResult sample(const world::PromptRecord& prompt, double temperature,
                          std::uint64_t seed) const {
    Rng rng(seed);
    FastState st(*this);
    GenerationResult out;
    std::vector<T> x = cond_vector(prompt);
    for (int step = 0; step < cfg_.max_length; ++step) {
      add_position(x, step);
      const auto logits_and_value = st.advance(x);
      const auto& logits = logits_and_value.first;
      out.values.push_back(static_cast<float>(logits_and_value.second));
      const int pick = sample_index(logits, temperature, rng, out);
      if (pick == cfg_.end_token()) {
        out.token_ids.push_back(pick);
        out.termination = Termination::end_token;
        return out;
      }
      out.token_ids.push_back(pick);
      x.assign(tok_embed_.val().begin() + static_cast<std::size_t>(pick) * cfg_.dim,
               tok_embed_.val().begin() + static_cast<std::size_t>(pick + 1) * cfg_.dim);
    }
    out.termination = Termination::max_length;
    return out;
  }

  // Parameter-identical copy with gradients disabled everywhere.
  std::unique_ptr<PolicyModel<T>> clone_frozen() const {
    auto copy = std::make_unique<PolicyModel<T>>(cfg_, /*seed=*/0);
    const auto& src = params_.entries();
    const auto& dst = copy->params_.entries();
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (src[i].first != dst[i].first)
        throw std::logic_error("policy: clone parameter order mismatch");
      Var<T> d = dst[i].second;
      d.val() = src[i].second.val();
    }
    copy->freeze();
    return copy;
  }

  void freeze() {
    for (const auto& [name, v] : params_.entries()) {
      v.node()->requires_grad = false;
      v.node()->grad.clear();
    }
  }

  void freeze_conditioner() {
    for (const auto& [name, v] : params_.entries())
      if (is_conditioner_param(name)) {
        v.node()->requires_grad = false;
        v.node()->grad.clear();
      }
  }

  std::vector<Var<T>> trainable_params() const {
    std::vector<Var<T>> out;
    for (const auto& [name, v] : params_.entries())
      if (v.requires_grad()) out.push_back(v);
    return out;
  }

  // Mean next-token cross-entropy (end token appended), teacher forcing.
  Var<T> pretrain_loss(Tape<T>& tape,
                       const std::vector<const world::PromptRecord*>& prompts,
                       const std::vector<const std::vector<int>*>& token_seqs) const {
    if (prompts.empty() || prompts.size() != token_seqs.size())
      throw std::invalid_argument("pretrain: bad batch");
    Var<T> total = Var<T>::scalar(T(0), false);
    std::int64_t count = 0;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      std::vector<int> actions = *token_seqs[i];
      for (int id : actions)
        if (id < 0 || id >= cfg_.symbols())
          throw std::invalid_argument("pretrain: token id out of range");
      actions.push_back(cfg_.end_token());
      if (static_cast<int>(actions.size()) > cfg_.max_length)
        actions.resize(static_cast<std::size_t>(cfg_.max_length));
      auto sc = score(tape, *prompts[i], actions);
      total = ad::add(tape, total, ad::reduce_sum(tape, sc.log_probs));
      count += static_cast<std::int64_t>(actions.size());
    }
    return ad::scale(tape, total, -T(1) / static_cast<T>(count));
  }

  ad::Checkpoint<T> to_checkpoint(std::string meta = "{}") const {
    return ad::checkpoint_from_params("generator", params_, std::move(meta));
  }
  void from_checkpoint(const ad::Checkpoint<T>& ckpt) {
    ad::load_params(ckpt, params_);
  }

 private:
  // Incremental single-position transformer evaluation with per-layer
  // key/value caches; mirrors score() arithmetic on one row at a time.
  struct FastState {
    const PolicyModel& model;
    std::vector<std::vector<T>> k_cache, v_cache;  // per layer, t*dim

    explicit FastState(const PolicyModel& m)
        : model(m),
          k_cache(static_cast<std::size_t>(m.cfg_.layers)),
          v_cache(static_cast<std::size_t>(m.cfg_.layers)) {}

    static void layernorm_row(const std::vector<T>& g, const std::vector<T>& b,
                              const T* x, T* out, int d) {
      T mean = 0, var = 0;
      for (int i = 0; i < d; ++i) mean += x[i];
      mean /= T(d);
      for (int i = 0; i < d; ++i) {
        const T c = x[i] - mean;
        var += c * c;
      }
      var /= T(d);
      const T inv = T(1) / std::sqrt(var + static_cast<T>(nn::kLayerNormEps));
      for (int i = 0; i < d; ++i)
        out[i] = g[static_cast<std::size_t>(i)] * (x[i] - mean) * inv +
                 b[static_cast<std::size_t>(i)];
    }

    static void linear_row(const nn::Linear<T>& lin, const T* x, T* out) {
      const int din = lin.w.dim(0), dout = lin.w.dim(1);
      kern::table<T>().matmul(x, lin.w.val().data(), out, 1, dout, din, false, false);
      kern::table<T>().add(out, lin.b.val().data(), out,
                           static_cast<std::size_t>(dout));
    }

    // Returns (logits row, value estimate) for the state just appended.
    std::pair<std::vector<T>, T> advance(std::vector<T> x) {
      const auto& cfg = model.cfg_;
      const int d = cfg.dim, heads = cfg.heads, dh = d / heads;
      std::vector<T> h(static_cast<std::size_t>(d)), q(h), k(h), v(h), ctx(h),
          tmp(static_cast<std::size_t>(4) * d);
      T value_estimate = T(0);
      for (int l = 0; l < cfg.layers; ++l) {
        const auto& blk = model.blocks_[static_cast<std::size_t>(l)];
        layernorm_row(blk.ln1.gamma.val(), blk.ln1.beta.val(), x.data(), h.data(), d);
        linear_row(blk.attn.wq, h.data(), q.data());
        linear_row(blk.attn.wk, h.data(), k.data());
        linear_row(blk.attn.wv, h.data(), v.data());
        auto& kc = k_cache[static_cast<std::size_t>(l)];
        auto& vc = v_cache[static_cast<std::size_t>(l)];
        kc.insert(kc.end(), k.begin(), k.end());
        vc.insert(vc.end(), v.begin(), v.end());
        const int steps = static_cast<int>(kc.size()) / d;
        const T scl = T(1) / static_cast<T>(std::sqrt(double(dh)));
        std::vector<T> probs(static_cast<std::size_t>(steps));
        for (int hd = 0; hd < heads; ++hd) {
          const int off = hd * dh;
          for (int s = 0; s < steps; ++s)
            probs[static_cast<std::size_t>(s)] =
                kern::table<T>().dot(q.data() + off, kc.data() + s * d + off,
                                     static_cast<std::size_t>(dh)) *
                scl;
          kern::table<T>().softmax_row(probs.data(), probs.data(), steps);
          for (int i = 0; i < dh; ++i) {
            T acc = T(0);
            for (int s = 0; s < steps; ++s)
              acc += probs[static_cast<std::size_t>(s)] * vc[s * d + off + i];
            ctx[static_cast<std::size_t>(off + i)] = acc;
          }
        }
        linear_row(blk.attn.wo, ctx.data(), h.data());
        for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] += h[static_cast<std::size_t>(i)];
        layernorm_row(blk.ln2.gamma.val(), blk.ln2.beta.val(), x.data(), h.data(), d);
        linear_row(blk.fc1, h.data(), tmp.data());
        kern::table<T>().gelu(tmp.data(), tmp.data(), static_cast<std::size_t>(4) * d);
        linear_row(blk.fc2, tmp.data(), h.data());
        for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] += h[static_cast<std::size_t>(i)];
        if (l + 1 == cfg.shared_depth) {
          // Value head reads the shared trunk at this depth.
          std::vector<T> vh(static_cast<std::size_t>(d)), vtmp(static_cast<std::size_t>(d));
          layernorm_row(model.value_ln_.gamma.val(), model.value_ln_.beta.val(),
                        x.data(), vh.data(), d);
          linear_row(model.value_fc1_, vh.data(), vtmp.data());
          kern::table<T>().gelu(vtmp.data(), vtmp.data(), static_cast<std::size_t>(d));
          T out1 = T(0);
          kern::table<T>().matmul(vtmp.data(), model.value_fc2_.w.val().data(), &out1,
                                  1, 1, d, false, false);
          value_estimate = out1 + model.value_fc2_.b.val()[0];
        }
      }
      layernorm_row(model.final_ln_.gamma.val(), model.final_ln_.beta.val(), x.data(),
                    h.data(), d);
      std::vector<T> logits(static_cast<std::size_t>(cfg.symbols()));
      linear_row(model.logit_head_, h.data(), logits.data());
      return {std::move(logits), value_estimate};
    }
  };

  std::vector<T> cond_vector(const world::PromptRecord& prompt) const {
    Tape<T> tape;
    auto c = cond_(tape, prompt);
    return c.val();
  }

  void add_position(std::vector<T>& x, int pos) const {
    kern::table<T>().add(x.data(),
                         pos_embed_.val().data() + static_cast<std::size_t>(pos) * cfg_.dim,
                         x.data(), static_cast<std::size_t>(cfg_.dim));
  }

  int sample_index(const std::vector<T>& logits, double temperature, Rng& rng,
                   GenerationResult& out) const {
    const int v = static_cast<int>(logits.size());
    if (temperature <= 0.0) {  // greedy limit
      int arg = 0;
      for (int i = 1; i < v; ++i)
        if (logits[static_cast<std::size_t>(i)] > logits[static_cast<std::size_t>(arg)])
          arg = i;
      out.log_probs.push_back(0.0f);
      return arg;
    }
    std::vector<T> scaled(logits);
    for (auto& s : scaled) s = static_cast<T>(s / temperature);
    const T mx = kern::table<T>().max(scaled.data(), scaled.size());
    double denom = 0.0;
    std::vector<double> p(scaled.size());
    for (std::size_t i = 0; i < scaled.size(); ++i) {
      p[i] = std::exp(double(scaled[i] - mx));
      denom += p[i];
    }
    const double u = rng.uniform() * denom;
    double acc = 0.0;
    int pick = v - 1;
    for (int i = 0; i < v; ++i) {
      acc += p[static_cast<std::size_t>(i)];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    out.log_probs.push_back(
        static_cast<float>(std::log(p[static_cast<std::size_t>(pick)] / denom)));
    return pick;
  }

  PolicyConfig cfg_;
  ad::ParamStore<T> params_;
  textcond::TextConditioner<T> cond_;
  Var<T> tok_embed_, pos_embed_;
  std::vector<nn::TransformerBlock<T>> blocks_;
  nn::LayerNorm<T> final_ln_;
  nn::Linear<T> logit_head_;
  nn::LayerNorm<T> value_ln_;
  nn::Linear<T> value_fc1_, value_fc2_;
};

}  // namespace mogen::gen
