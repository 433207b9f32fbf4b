#pragma once

// Reward over the frozen contrastive metric space: negative squared
// Euclidean text-to-motion distance, plus the motion-to-motion term for
// paired samples, and the batch-mean pseudo-score rule that puts unpaired
// samples on the same scale in mixed batches.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mogen::enc {

enum class RewardMode { text_only, paired, mixed };

struct RewardConfig {
  double lambda_t = 0.4;
  double lambda_m = 2.0;
  RewardMode mode = RewardMode::mixed;

  void validate() const {
    if (lambda_t < 0.0 || lambda_m < 0.0 || lambda_t + lambda_m <= 0.0)
      throw std::invalid_argument("reward: lambda_t + lambda_m must be positive");
  }
};

inline RewardMode reward_mode_from_name(const std::string& s) {
  if (s == "text_only") return RewardMode::text_only;
  if (s == "paired") return RewardMode::paired;
  if (s == "mixed") return RewardMode::mixed;
  throw std::invalid_argument("reward: unknown mode '" + s + "'");
}

inline const char* reward_mode_name(RewardMode m) {
  switch (m) {
    case RewardMode::text_only: return "text_only";
    case RewardMode::paired: return "paired";
    case RewardMode::mixed: return "mixed";
  }
  return "?";
}

inline double squared_distance(const std::vector<float>& a,
                               const std::vector<float>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("reward: embedding dimension mismatch");
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    d2 += d * d;
  }
  return d2;
}

// Single-sample reward. Paired branch requires the ground-truth embedding.
inline double reward(const std::vector<float>& f_t,
                     const std::vector<float>& f_m_pred,
                     const std::optional<std::vector<float>>& f_m_gt,
                     const RewardConfig& cfg) {
  cfg.validate();
  const double m2t = -cfg.lambda_t * squared_distance(f_t, f_m_pred);
  if (cfg.mode == RewardMode::text_only) return m2t;
  if (!f_m_gt.has_value()) {
    if (cfg.mode == RewardMode::paired)
      throw std::invalid_argument("reward: paired mode requires a ground-truth motion");
    return m2t;  // mixed mode, text-only sample outside a batch context
  }
  return m2t - cfg.lambda_m * squared_distance(*f_m_gt, f_m_pred);
}

struct BatchRewardItem {
  std::vector<float> f_t;
  std::vector<float> f_m_pred;
  std::optional<std::vector<float>> f_m_gt;  // present iff the record is paired
};

// Mixed-batch scoring: paired samples get the full two-term reward; each
// unpaired sample receives the batch mean of the paired samples'
// motion-to-motion term as a pseudo-score so both regimes share a scale.
inline std::vector<double> batch_rewards(const std::vector<BatchRewardItem>& batch,
                                         const RewardConfig& cfg) {
  cfg.validate();
  std::vector<double> out(batch.size(), 0.0);
  if (cfg.mode == RewardMode::text_only) {
    for (std::size_t i = 0; i < batch.size(); ++i)
      out[i] = -cfg.lambda_t * squared_distance(batch[i].f_t, batch[i].f_m_pred);
    return out;
  }
  double m2m_sum = 0.0;
  int paired_count = 0, unpaired_count = 0;
  for (const auto& item : batch) {
    if (item.f_m_gt.has_value()) {
      ++paired_count;
      m2m_sum += -cfg.lambda_m * squared_distance(*item.f_m_gt, item.f_m_pred);
    } else {
      ++unpaired_count;
    }
  }
  if (cfg.mode == RewardMode::paired && unpaired_count > 0)
    throw std::invalid_argument("reward: paired mode cannot score unpaired samples");
  if (cfg.mode == RewardMode::mixed && unpaired_count > 0 && paired_count == 0)
    throw std::invalid_argument(
        "reward: mixed batch needs at least one paired sample for the pseudo-score");
  const double pseudo = paired_count > 0 ? m2m_sum / paired_count : 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& item = batch[i];
    const double m2t = -cfg.lambda_t * squared_distance(item.f_t, item.f_m_pred);
    if (item.f_m_gt.has_value())
      out[i] = m2t - cfg.lambda_m * squared_distance(*item.f_m_gt, item.f_m_pred);
    else
      out[i] = m2t + pseudo;
  }
  return out;
}

}  // namespace mogen::enc
