#include "fssl/losses.hpp"

namespace fssl {

void LossConfig::validate() const {
  if (lambda_eff < 0.0 || lambda_stealth < 0.0)
    fail_invalid("loss: lambda coefficients must be non-negative");
  if (temperature <= 0.0) fail_invalid("loss: temperature must be positive");
}

Tensor contrastive_loss(const std::vector<std::pair<Image, Image>>& pairs, const ParamMap& theta,
                        const EncoderArch& arch, double temperature) {
  int b = static_cast<int>(pairs.size());
  if (b < 2) fail_invalid("contrastive_loss: need at least 2 pairs (no negatives otherwise)");
  if (temperature <= 0.0) fail_invalid("contrastive_loss: temperature must be positive");

  // Views stacked as [x_0..x_{B-1}, x+_0..x+_{B-1}]; positive of i is i+-B.
  std::vector<const Image*> views;
  views.reserve(static_cast<size_t>(2 * b));
  for (const auto& [x, xp] : pairs) views.push_back(&x);
  for (const auto& [x, xp] : pairs) views.push_back(&xp);
  Tensor batch = to_batch(views);

  Tensor p = l2_normalize_rows(project(encode(batch, theta, arch), theta, arch));
  Tensor sim = scale(matmul(p, transpose(p)), 1.0 / temperature);

  int n = 2 * b;
  // Exclude self-similarity from the denominator with a constant mask.
  Tensor offdiag = Tensor::from_array(
      {n, n}, Eigen::ArrayXd::Ones(static_cast<Eigen::Index>(n) * n));
  {
    Eigen::ArrayXd m = offdiag.array();
    for (int i = 0; i < n; ++i) m[static_cast<Eigen::Index>(i) * n + i] = 0.0;
    offdiag = Tensor::from_array({n, n}, std::move(m));
  }
  std::vector<int> pos(static_cast<size_t>(n));
  for (int i = 0; i < b; ++i) {
    pos[static_cast<size_t>(i)] = i + b;
    pos[static_cast<size_t>(i + b)] = i;
  }
  Tensor denom = log(row_sums(mul(exp(sim), offdiag)));
  Tensor positives = select_cols(sim, pos);
  return mean(sub(denom, positives));
}

namespace {

Tensor per_row_cosine_sum(const Tensor& a, const Tensor& b, double coeff) {
  int n = a.extent(0);
  Tensor acc = Tensor::scalar(0.0);
  for (int i = 0; i < n; ++i)
    acc = add(acc, cosine_similarity(row(a, i), row(b, i)));
  return coeff == 1.0 ? acc : scale(acc, coeff);
}

}  // namespace

Tensor effectiveness_loss(const ShadowDataset& shadow, const ParamMap& theta_mal,
                          const ParamMap& theta_global, const std::vector<SubTrigger>& trigger,
                          double beta, const EncoderArch& arch, Rng& rng) {
  if (shadow.adv_samples.empty()) fail_invalid("effectiveness_loss: adv_samples is empty");
  if (shadow.target_refs.empty()) fail_invalid("effectiveness_loss: target_refs is empty");
  int b = static_cast<int>(shadow.adv_samples.size());

  std::vector<Image> triggered;
  triggered.reserve(static_cast<size_t>(b));
  std::vector<const Image*> ref_ptrs;
  ref_ptrs.reserve(static_cast<size_t>(b));
  for (const auto& x : shadow.adv_samples) {
    triggered.push_back(apply_global_trigger(x, trigger));
    int r = rng.uniform_int(static_cast<int>(shadow.target_refs.size()));
    ref_ptrs.push_back(&shadow.target_refs[static_cast<size_t>(r)]);
  }
  std::vector<const Image*> trig_ptrs;
  trig_ptrs.reserve(triggered.size());
  for (const auto& img : triggered) trig_ptrs.push_back(&img);

  ParamMap frozen_global = detached(theta_global);  // stop-gradient on theta_g
  Tensor xt = to_batch(ref_ptrs);
  Tensor z_adv = encode(to_batch(trig_ptrs), theta_mal, arch);
  Tensor z_t = encode(xt, theta_mal, arch);
  Tensor z_t_global = encode(xt, frozen_global, arch);

  Tensor acc = add(per_row_cosine_sum(z_adv, z_t, 1.0),
                   per_row_cosine_sum(z_t, z_t_global, beta));
  return scale(acc, -1.0 / b);
}

Tensor stealth_loss(const ShadowDataset& shadow, const ParamMap& theta_mal,
                    const ParamMap& theta_global, const EncoderArch& arch) {
  if (shadow.clean_pairs.empty()) fail_invalid("stealth_loss: clean_pairs is empty");
  int b = static_cast<int>(shadow.clean_pairs.size());
  std::vector<const Image*> xs, xps;
  xs.reserve(static_cast<size_t>(b));
  xps.reserve(static_cast<size_t>(b));
  for (const auto& [x, xp] : shadow.clean_pairs) {
    xs.push_back(&x);
    xps.push_back(&xp);
  }
  ParamMap frozen_global = detached(theta_global);
  Tensor x = to_batch(xs), xp = to_batch(xps);
  Tensor z = encode(x, theta_mal, arch);
  Tensor zg = encode(x, frozen_global, arch);
  Tensor zp = encode(xp, theta_mal, arch);
  Tensor zpg = encode(xp, frozen_global, arch);
  Tensor acc = add(per_row_cosine_sum(z, zg, 1.0), per_row_cosine_sum(zp, zpg, 1.0));
  return scale(acc, -1.0 / b);
}

Tensor joint_loss(const ShadowDataset& shadow, const ParamMap& theta_mal,
                  const ParamMap& theta_global, const std::vector<SubTrigger>& trigger,
                  const LossConfig& cfg, const EncoderArch& arch, Rng& rng) {
  cfg.validate();
  Tensor eff = effectiveness_loss(shadow, theta_mal, theta_global, trigger, cfg.beta, arch, rng);
  Tensor stealth = stealth_loss(shadow, theta_mal, theta_global, arch);
  return add(scale(eff, cfg.lambda_eff), scale(stealth, cfg.lambda_stealth));
}

}  // namespace fssl
