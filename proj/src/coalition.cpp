#include "fssl/coalition.hpp"

#include <algorithm>
#include <cmath>

namespace fssl {

namespace {

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

ParamMap make_coalition_mlp(int embed_dim, uint64_t seed) {
  Rng rng(derive_seed(seed, "coalition_mlp"));
  auto fan_in_uniform = [&](Shape s, int fan_in) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    return Tensor::uniform(std::move(s), rng, -bound, bound);
  };
  ParamMap p;
  p["fc0.w"] = fan_in_uniform({2 * embed_dim, embed_dim}, 2 * embed_dim);
  p["fc0.b"] = Tensor::zeros({embed_dim});
  p["fc1.w"] = fan_in_uniform({embed_dim, 1}, embed_dim);
  p["fc1.b"] = Tensor::zeros({1});
  return p;
}

Eigen::VectorXd spatial_features(const ParamMap& delta, int kernel_size) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(kernel_size) * kernel_size);
  int64_t slices = 0;
  for (const auto& [name, t] : delta) {
    if (t.ndim() != 4) continue;
    if (t.extent(2) != kernel_size || t.extent(3) != kernel_size) continue;
    int co = t.extent(0), ci = t.extent(1);
    Eigen::Index kk = static_cast<Eigen::Index>(kernel_size) * kernel_size;
    for (int a = 0; a < co; ++a)
      for (int b = 0; b < ci; ++b) {
        acc += t.array()
                   .segment((static_cast<Eigen::Index>(a) * ci + b) * kk, kk)
                   .matrix();
        ++slices;
      }
  }
  if (slices == 0)
    fail_invalid("spatial_features: no conv kernels of size " + std::to_string(kernel_size) +
                 " in delta");
  return acc / static_cast<double>(slices);
}

Eigen::VectorXd channel_features(const ParamMap& delta, const ParamMap& theta_coalition,
                                 const Tensor& probe_batch, const EncoderArch& arch) {
  if (probe_batch.extent(0) < 1) fail_invalid("channel_features: probe batch is empty");
  ParamMap shifted = params_add(theta_coalition, delta);
  Tensor z = encode(probe_batch, shifted, arch);
  Tensor c = col_means(z);
  return c.array().matrix();
}

namespace {

double interaction_mean(size_t j, size_t n_members,
                        const std::vector<double>& peer_terms) {
  if (peer_terms.empty()) {
    log_warn("coalition: empty peer set for member " + std::to_string(j) +
             ", score defaults to 0.5");
    return 0.5;
  }
  double acc = 0.0;
  for (double t : peer_terms) acc += t;
  return acc / static_cast<double>(n_members);
}

}  // namespace

double spatial_score(size_t j, const std::vector<Eigen::VectorXd>& members,
                     const std::optional<Eigen::VectorXd>& global_feat, double d) {
  if (members.empty()) fail_invalid("spatial_score: no members");
  if (d <= 0.0) d = static_cast<double>(members[0].size());
  std::vector<double> terms;
  for (size_t p = 0; p < members.size(); ++p) {
    if (p == j) continue;
    terms.push_back(sigmoid_scalar(members[j].dot(members[p]) / std::sqrt(d)));
  }
  if (global_feat) terms.push_back(sigmoid_scalar(members[j].dot(*global_feat) / std::sqrt(d)));
  return interaction_mean(j, members.size(), terms);
}

double channel_score(size_t j, const std::vector<Eigen::VectorXd>& members,
                     const std::optional<Eigen::VectorXd>& global_feat, const ParamMap& mlp) {
  if (members.empty()) fail_invalid("channel_score: no members");
  auto pair_term = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    Tensor in = concat(Tensor::from_array({static_cast<int>(a.size())}, a.array()),
                       Tensor::from_array({static_cast<int>(b.size())}, b.array()));
    return sigmoid_scalar(mlp_forward(in, mlp).array()[0]);
  };
  std::vector<double> terms;
  for (size_t p = 0; p < members.size(); ++p) {
    if (p == j) continue;
    terms.push_back(pair_term(members[j], members[p]));
  }
  if (global_feat) terms.push_back(pair_term(members[j], *global_feat));
  return interaction_mean(j, members.size(), terms);
}

ParamMap fuse(const ParamMap& theta_coalition, const std::vector<ParamMap>& deltas,
              const std::vector<double>& alphas) {
  if (deltas.empty()) fail_invalid("fuse: need at least one delta");
  if (deltas.size() != alphas.size()) fail_invalid("fuse: alphas/deltas size mismatch");
  double total = 0.0;
  for (double a : alphas) total += a;
  if (total <= 0.0) fail_invalid("fuse: attention weights sum to zero");
  ParamMap out = detached(theta_coalition);
  for (size_t i = 0; i < deltas.size(); ++i)
    out = params_axpy(out, alphas[i] / total, deltas[i]);
  return out;
}

CoalitionRoundResult run_coalition_round(std::vector<std::pair<int, ParamMap>> members,
                                         const ParamMap& theta_coalition,
                                         const ParamMap& theta_global_prev,
                                         const Tensor& probe_batch, const ParamMap& mlp,
                                         const EncoderArch& arch, const CoalitionOptions& opt) {
  if (members.empty()) fail_invalid("run_coalition_round: no members");
  std::sort(members.begin(), members.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  int kernel = arch.dominant_kernel();
  std::vector<ParamMap> deltas;
  std::vector<Eigen::VectorXd> sfeats, cfeats;
  deltas.reserve(members.size());
  for (const auto& [id, theta] : members) {
    deltas.push_back(params_sub(theta, theta_coalition));
    sfeats.push_back(spatial_features(deltas.back(), kernel));
    cfeats.push_back(channel_features(deltas.back(), theta_coalition, probe_batch, arch));
  }
  std::optional<Eigen::VectorXd> gs, gc;
  if (opt.include_global) {
    ParamMap global_delta = params_sub(theta_global_prev, theta_coalition);
    gs = spatial_features(global_delta, kernel);
    gc = channel_features(global_delta, theta_coalition, probe_batch, arch);
  }

  std::vector<double> alphas(members.size());
  CoalitionRoundResult result;
  result.weights.resize(members.size());
  for (size_t j = 0; j < members.size(); ++j) {
    auto& w = result.weights[j];
    w.client_id = members[j].first;
    w.alpha_spatial = spatial_score(j, sfeats, gs, opt.scale_d);
    w.alpha_channel = channel_score(j, cfeats, gc, mlp);
    w.alpha = w.alpha_spatial + w.alpha_channel;
    alphas[j] = w.alpha;
  }
  double total = 0.0;
  for (double a : alphas) total += a;
  for (size_t j = 0; j < members.size(); ++j) result.weights[j].weight = alphas[j] / total;
  result.fused = fuse(theta_coalition, deltas, alphas);
  return result;
}

}  // namespace fssl
