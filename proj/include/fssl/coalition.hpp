#pragma once

#include <optional>

#include "fssl/encoder.hpp"

namespace fssl {

// Per-member attention outcome for one coalition round.
struct AttentionWeight {
  int client_id = -1;
  double alpha_spatial = 0.0;
  double alpha_channel = 0.0;
  double alpha = 0.0;
  double weight = 0.0;  // normalized: sums to 1 across members
};

struct CoalitionOptions {
  bool include_global = true;  // previous-round global model joins the peer set
  double scale_d = 0.0;        // 0: default to the spatial feature length
};

// Fixed 2-layer perceptron (2D -> D -> 1) shared by the coalition; seeded
// deterministically and never trained.
ParamMap make_coalition_mlp(int embed_dim, uint64_t seed);

// Mean of all conv kernel deltas (over layers, output and input channels)
// with the arch's dominant kernel size, flattened to K*K.
Eigen::VectorXd spatial_features(const ParamMap& delta, int kernel_size);

// Batch-mean embedding of the probe batch under theta_coalition + delta.
Eigen::VectorXd channel_features(const ParamMap& delta, const ParamMap& theta_coalition,
                                 const Tensor& probe_batch, const EncoderArch& arch);

// (1/M) * sum_{p != j} sigmoid(S_j . S_p / sqrt(d)); the peer set is the other
// members plus the global feature when present. M is the member count.
double spatial_score(size_t j, const std::vector<Eigen::VectorXd>& members,
                     const std::optional<Eigen::VectorXd>& global_feat, double d);

// (1/M) * sum_{p != j} sigmoid(MLP(C_j ++ C_p))
double channel_score(size_t j, const std::vector<Eigen::VectorXd>& members,
                     const std::optional<Eigen::VectorXd>& global_feat, const ParamMap& mlp);

// theta^{t+1} = theta^t + sum_j (alpha_j / sum_k alpha_k) * delta_j
ParamMap fuse(const ParamMap& theta_coalition, const std::vector<ParamMap>& deltas,
              const std::vector<double>& alphas);

struct CoalitionRoundResult {
  ParamMap fused;
  std::vector<AttentionWeight> weights;  // ordered by client id
};

// Full Eq-chain for one round: deltas -> S/C features -> interaction scores
// -> fused next-round initialization. Members may arrive in any order; the
// result is ordered (and deterministic) by client id.
CoalitionRoundResult run_coalition_round(std::vector<std::pair<int, ParamMap>> members,
                                         const ParamMap& theta_coalition,
                                         const ParamMap& theta_global_prev,
                                         const Tensor& probe_batch, const ParamMap& mlp,
                                         const EncoderArch& arch, const CoalitionOptions& opt);

}  // namespace fssl
