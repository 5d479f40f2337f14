#pragma once

#include <span>

#include "fssl/encoder.hpp"
#include "fssl/trigger.hpp"

namespace fssl {

// Multinomial logistic probe over frozen embeddings.
struct ProbeParams {
  Eigen::MatrixXd weight;  // d x n_classes
  Eigen::VectorXd bias;    // n_classes
};

// Full-batch gradient descent on softmax cross entropy, zero-initialized.
// Ties in argmax resolve to the lowest class index.
ProbeParams fit_logistic(const Eigen::MatrixXd& x, const std::vector<int>& y, int n_classes,
                         int epochs, double lr);
std::vector<int> predict_logistic(const ProbeParams& probe, const Eigen::MatrixXd& x);

// Embeddings of a whole dataset (rows in dataset order), forward-only.
Eigen::MatrixXd embed_dataset(const ParamMap& theta, const EncoderArch& arch, const Dataset& data);

ProbeParams train_probe(const ParamMap& theta, const EncoderArch& arch, const Dataset& labeled,
                        int epochs, double lr);

double compute_acc(const ParamMap& theta, const EncoderArch& arch, const ProbeParams& probe,
                   const Dataset& test);

// Applies the full global trigger to each test sample and measures the
// fraction predicted as the target class. exclude_target drops samples whose
// true label already is the target.
double compute_asr(const ParamMap& theta, const EncoderArch& arch, const ProbeParams& probe,
                   const Dataset& test, const std::vector<SubTrigger>& global_trigger,
                   int target_class, bool exclude_target = true);

// || mean embedding(triggered) - mean embedding(clean) ||_2 under theta.
double pcm(const ParamMap& theta, const EncoderArch& arch, const Tensor& clean_batch,
           const Tensor& triggered_batch);

// Norm-bounding defense: client deltas are rescaled to at most clip_norm
// (global L2 across all parameters) before averaging.
ParamMap robust_fedavg_clip(std::span<const ParamMap> models, const ParamMap& prev,
                            double clip_norm);

// Coordinate-wise trimmed mean: drop trim_k extremes each side, average the
// rest in client order (trim_k = 0 reduces exactly to the plain mean).
ParamMap robust_fedavg_trimmed(std::span<const ParamMap> models, int trim_k);

}  // namespace fssl
