#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "gradcheck.hpp"
#include "mogen/motionvq/vqvae.hpp"

using namespace mogen;
using vq::Vqvae;
using vq::VqvaeConfig;
using world::MotionSequence;

namespace {

MotionSequence constant_motion(int frames, float fill, int dim = 18) {
  MotionSequence m;
  m.frames = frames;
  m.feature_dim = dim;
  m.data.assign(static_cast<std::size_t>(frames) * dim, fill);
  return m;
}

MotionSequence noisy_pattern(int frames, int pattern, std::uint64_t seed, int dim = 18) {
  Rng rng(seed);
  MotionSequence m = constant_motion(frames, 0.0f, dim);
  for (int t = 0; t < frames; ++t)
    for (int d = 0; d < dim; ++d)
      m.at(t, d) = static_cast<float>(std::sin(0.7 * pattern * (d + 1)) +
                                      0.9 * pattern + 0.05 * rng.normal());
  return m;
}

VqvaeConfig small_cfg() {
  VqvaeConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden = 16;
  cfg.codebook_size = 16;
  cfg.code_dim = 8;
  cfg.res_blocks = 1;
  return cfg;
}

}  // namespace

TEST_CASE("token count follows the shape contract") {
  Vqvae<float> model(small_cfg(), 1);
  for (int frames : {4, 5, 8, 13, 16, 31}) {
    auto m = constant_motion(frames, 0.3f, 6);
    const auto tokens = model.encode(m);
    CHECK(static_cast<int>(tokens.size()) == (frames + 3) / 4);
  }
  CHECK_THROWS_AS(model.encode(constant_motion(3, 0.1f, 6)), std::invalid_argument);
}

TEST_CASE("encode is deterministic and matches a brute-force scan") {
  Vqvae<float> model(small_cfg(), 2);
  auto m = noisy_pattern(20, 2, 42, 6);
  const auto t1 = model.encode(m);
  const auto t2 = model.encode(m);
  CHECK(t1 == t2);

  // Independent oracle: exhaustive distance scan over the codebook.
  ad::Tape<float> tape;
  auto latent = model.encode_latent(tape, m);
  const auto cols = Vqvae<float>::latent_columns(latent);
  const auto& book = model.codebook();
  const int dc = model.config().code_dim;
  const int k = model.config().codebook_size;
  for (int t = 0; t < latent.dim(1); ++t) {
    double best = 1e300;
    int arg = -1;
    for (int c = 0; c < k; ++c) {
      double d2 = 0.0;
      for (int j = 0; j < dc; ++j) {
        const double diff = double(cols[t * dc + j]) - double(book[c * dc + j]);
        d2 += diff * diff;
      }
      if (d2 < best) {
        best = d2;
        arg = c;
      }
    }
    CHECK(t1[static_cast<std::size_t>(t)] == arg);
  }
}

TEST_CASE("quantization is idempotent") {
  Vqvae<float> model(small_cfg(), 3);
  Rng rng(9);
  const int dc = model.config().code_dim;
  std::vector<float> z(static_cast<std::size_t>(5) * dc);
  for (auto& v : z) v = static_cast<float>(rng.normal());
  const auto idx1 = model.assign_codes(z, 5);
  std::vector<float> q(z.size());
  for (int t = 0; t < 5; ++t)
    for (int j = 0; j < dc; ++j)
      q[t * dc + j] = model.codebook()[static_cast<std::size_t>(idx1[t]) * dc + j];
  const auto idx2 = model.assign_codes(q, 5);
  std::vector<float> q2(z.size());
  for (int t = 0; t < 5; ++t)
    for (int j = 0; j < dc; ++j)
      q2[t * dc + j] = model.codebook()[static_cast<std::size_t>(idx2[t]) * dc + j];
  CHECK(q == q2);
}

TEST_CASE("decode shape contract and index validation") {
  Vqvae<float> model(small_cfg(), 4);
  auto m = noisy_pattern(13, 1, 7, 6);
  const auto tokens = model.encode(m);
  const auto recon = model.decode(tokens);
  CHECK(recon.frames == static_cast<int>(tokens.size()) * 4);
  CHECK(recon.feature_dim == 6);
  CHECK(recon.finite());
  CHECK_THROWS_AS(model.decode({0, 99}), std::invalid_argument);
  CHECK_THROWS_AS(model.decode({}), std::invalid_argument);
}

TEST_CASE("straight-through estimator copies decoder-input gradients") {
  using ad::Tape;
  using ad::Var;
  Tape<double> tape;
  auto z = Var<double>::leaf({2, 3}, {0.1, -0.2, 0.3, 0.4, 0.5, -0.6}, true);
  auto zq = Var<double>::leaf({2, 3}, {1, 1, 1, 2, 2, 2}, false);
  auto dec_in = ad::add(tape, z, ad::sub(tape, zq, z).detach());
  for (std::size_t i = 0; i < dec_in.val().size(); ++i)
    CHECK(dec_in.val()[i] == doctest::Approx(zq.val()[i]));
  auto w = Var<double>::leaf({2, 3}, {1, 2, 3, 4, 5, 6}, false);
  auto loss = ad::reduce_sum(tape, ad::mul(tape, dec_in, w));
  tape.backward(loss);
  for (std::size_t i = 0; i < z.grad().size(); ++i)
    CHECK(z.grad()[i] == doctest::Approx(w.val()[i]));  // gradient passes through
}

TEST_CASE("vq losses pass finite-difference checks") {
  VqvaeConfig cfg = small_cfg();
  cfg.hidden = 8;
  cfg.codebook_size = 8;
  cfg.code_dim = 4;
  Vqvae<double> model(cfg, 11);
  auto m = noisy_pattern(8, 1, 3, 6);

  SUBCASE("reconstruction loss through the pass-through autoencoder") {
    auto fn = [&](ad::Tape<double>& t) {
      auto z = model.encode_latent(t, m);
      auto x_hat = model.decode_latent(t, z);
      const auto padded = Vqvae<double>::pad_to_multiple(m, 4);
      std::vector<double> target(static_cast<std::size_t>(6) * padded.frames);
      for (int tt = 0; tt < padded.frames; ++tt)
        for (int d = 0; d < 6; ++d)
          target[static_cast<std::size_t>(d) * padded.frames + tt] = padded.at(tt, d);
      auto tgt = ad::Var<double>::leaf({6, padded.frames}, std::move(target), false);
      return ad::reduce_mean(t, ad::sqdiff(t, x_hat, tgt));
    };
    CHECK(gradcheck::max_rel_error(fn, model.params().vars()) < gradcheck::kTolerance);
  }
  SUBCASE("commitment loss w.r.t. encoder parameters") {
    auto fn = [&](ad::Tape<double>& t) {
      auto z = model.encode_latent(t, m);
      const auto cols = Vqvae<double>::latent_columns(z);
      const auto idx = model.assign_codes(cols, z.dim(1));
      ad::Tape<double> scratch;
      auto zq = model.codebook_lookup(scratch, idx);
      auto zq_const = ad::Var<double>::leaf(zq.shape(), zq.val(), false);
      return ad::scale(t, ad::reduce_mean(t, ad::sqdiff(t, z, zq_const)), 0.25);
    };
    CHECK(gradcheck::max_rel_error(fn, model.params().vars()) < gradcheck::kTolerance);
  }
}

TEST_CASE("ema decay 1.0 leaves the codebook unchanged") {
  VqvaeConfig cfg = small_cfg();
  cfg.ema_decay = 1.0;
  Vqvae<float> model(cfg, 5);
  ad::AdamW<float> opt(model.params().vars(), {});
  std::vector<MotionSequence> data{noisy_pattern(16, 1, 1, 6), noisy_pattern(16, 2, 2, 6)};
  std::vector<const MotionSequence*> batch{&data[0], &data[1]};
  model.train_step(batch, opt, 1e-3f);  // k-means init happens here
  const auto before = model.codebook();
  model.train_step(batch, opt, 1e-3f);
  CHECK(model.codebook() == before);
}

TEST_CASE("single-pattern overfit drives reconstruction toward zero") {
  VqvaeConfig cfg = small_cfg();
  Vqvae<float> model(cfg, 6);
  ad::AdamWConfig<float> ocfg;
  ad::AdamW<float> opt(model.params().vars(), ocfg);
  auto m = noisy_pattern(16, 1, 123, 6);
  std::vector<const MotionSequence*> batch{&m};
  double last = 0.0;
  for (int step = 0; step < 320; ++step)
    last = model.train_step(batch, opt, 2e-3f).reconstruction;
  CHECK(last < 0.02);
  // One dominant code on a single pattern.
  const auto tokens = model.encode(m);
  std::map<int, int> hist;
  for (int t : tokens) hist[t]++;
  int top = 0;
  for (auto& [unused, c] : hist) top = std::max(top, c);
  CHECK(top * 2 >= static_cast<int>(tokens.size()));
}

TEST_CASE("dead-code reset re-seeds unused codes from recent latents") {
  VqvaeConfig cfg = small_cfg();
  Vqvae<float> model(cfg, 7);
  ad::AdamW<float> opt(model.params().vars(), {});
  std::vector<MotionSequence> data{noisy_pattern(16, 1, 10, 6),
                                   noisy_pattern(16, 3, 11, 6)};
  std::vector<const MotionSequence*> batch{&data[0], &data[1]};
  model.train_step(batch, opt, 1e-3f);

  int used = 0;
  for (auto c : model.usage_count())
    if (c > 0) ++used;
  const int expected_resets = cfg.codebook_size - used;
  const auto reset_count = model.reset_dead_codes(99);
  CHECK(reset_count == expected_resets);

  if (reset_count > 0) {
    // Every reset vector must equal one of the last batch's encoder outputs
    // as captured during that training step.
    const std::vector<float>& all_cols = model.last_batch_latents();
    const int dc = cfg.code_dim;
    const int n = static_cast<int>(all_cols.size()) / dc;
    int matches = 0;
    for (int k = 0; k < cfg.codebook_size; ++k) {
      for (int t = 0; t < n; ++t) {
        bool same = true;
        for (int j = 0; j < dc; ++j)
          if (model.codebook()[static_cast<std::size_t>(k) * dc + j] !=
              all_cols[static_cast<std::size_t>(t) * dc + j]) {
            same = false;
            break;
          }
        if (same) {
          ++matches;
          break;
        }
      }
    }
    CHECK(matches >= reset_count);
  }

  // With every code marked used, nothing resets.
  model.train_step(batch, opt, 1e-3f);
  for (int k = 0; k < cfg.codebook_size; ++k)
    const_cast<std::vector<std::int64_t>&>(model.usage_count())[k] = 1;
  CHECK(model.reset_dead_codes(100) == 0);
}

TEST_CASE("code reset improves codebook usage on clustered data") {
  auto run = [](bool with_reset) {
    VqvaeConfig cfg;
    cfg.input_dim = 6;
    cfg.hidden = 16;
    cfg.codebook_size = 128;
    cfg.code_dim = 8;
    cfg.res_blocks = 1;
    Vqvae<float> model(cfg, 21);
    ad::AdamW<float> opt(model.params().vars(), {});
    std::vector<MotionSequence> data;
    for (int i = 0; i < 16; ++i) data.push_back(noisy_pattern(16, i % 4, 50 + i, 6));
    double perp = 0.0;
    for (int epoch = 0; epoch < 6; ++epoch) {
      for (int b = 0; b < 4; ++b) {
        std::vector<const MotionSequence*> batch;
        for (int i = 0; i < 4; ++i) batch.push_back(&data[b * 4 + i]);
        perp = model.train_step(batch, opt, 1e-3f).perplexity;
      }
      if (with_reset) model.reset_dead_codes(1000 + epoch);
    }
    return perp;
  };
  const double with_reset = run(true);
  const double without = run(false);
  CHECK(with_reset > without);
}

TEST_CASE("checkpoint round-trip preserves encode/decode behavior") {
  namespace fs = std::filesystem;
  VqvaeConfig cfg = small_cfg();
  Vqvae<float> model(cfg, 8);
  ad::AdamW<float> opt(model.params().vars(), {});
  std::vector<MotionSequence> data{noisy_pattern(16, 1, 1, 6), noisy_pattern(16, 2, 2, 6)};
  std::vector<const MotionSequence*> batch{&data[0], &data[1]};
  for (int i = 0; i < 5; ++i) model.train_step(batch, opt, 1e-3f);

  const auto path = (fs::temp_directory_path() / "mogen_vq_test.ckpt").string();
  ad::save_checkpoint(path, model.to_checkpoint());
  Vqvae<float> restored(cfg, 999);
  restored.from_checkpoint(ad::load_checkpoint<float>(path));
  auto m = noisy_pattern(12, 1, 77, 6);
  CHECK(restored.encode(m) == model.encode(m));
  CHECK(restored.decode(model.encode(m)).data == model.decode(model.encode(m)).data);
  fs::remove(path);
}
