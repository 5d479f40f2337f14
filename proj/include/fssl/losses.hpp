#pragma once

#include "fssl/encoder.hpp"
#include "fssl/trigger.hpp"

namespace fssl {

struct LossConfig {
  double beta = 0.8;
  double lambda_eff = 1.0;
  double lambda_stealth = 1.0;
  double temperature = 0.5;
  void validate() const;
};

// The malicious client's working set: clean pairs and to-be-triggered samples
// from its own partition, plus target-class reference inputs.
struct ShadowDataset {
  std::vector<std::pair<Image, Image>> clean_pairs;  // (x, augmented view)
  std::vector<Image> adv_samples;                    // clean; trigger applied by the loss
  std::vector<Image> target_refs;
};

// Normalized-temperature cross entropy over projected embeddings; positives
// are the two views of each pair, negatives all other views in the batch.
Tensor contrastive_loss(const std::vector<std::pair<Image, Image>>& pairs, const ParamMap& theta,
                        const EncoderArch& arch, double temperature);

// -E[ S(f(x+e, th_mal), f(x_t, th_mal)) + beta * S(f(x_t, th_mal), f(x_t, th_g)) ]
// x_t is drawn uniformly with replacement from target_refs per adv sample.
// theta_global is treated as a constant: no gradient ever reaches it.
Tensor effectiveness_loss(const ShadowDataset& shadow, const ParamMap& theta_mal,
                          const ParamMap& theta_global, const std::vector<SubTrigger>& trigger,
                          double beta, const EncoderArch& arch, Rng& rng);

// -E[ S(f(x, th_mal), f(x, th_g)) + S(f(x+, th_mal), f(x+, th_g)) ]
Tensor stealth_loss(const ShadowDataset& shadow, const ParamMap& theta_mal,
                    const ParamMap& theta_global, const EncoderArch& arch);

// lambda_eff * L_eff + lambda_stealth * L_stealth
Tensor joint_loss(const ShadowDataset& shadow, const ParamMap& theta_mal,
                  const ParamMap& theta_global, const std::vector<SubTrigger>& trigger,
                  const LossConfig& cfg, const EncoderArch& arch, Rng& rng);

}  // namespace fssl
