#include "fssl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace fssl {

ProbeParams fit_logistic(const Eigen::MatrixXd& x, const std::vector<int>& y, int n_classes,
                         int epochs, double lr) {
  if (x.rows() != static_cast<Eigen::Index>(y.size()))
    fail_invalid("fit_logistic: feature/label count mismatch");
  if (x.rows() == 0) fail_invalid("fit_logistic: empty training set");
  std::set<int> distinct(y.begin(), y.end());
  if (distinct.size() < 2) fail_invalid("fit_logistic: need at least 2 classes present");
  if (n_classes < 2) fail_invalid("fit_logistic: n_classes must be >= 2");

  Eigen::Index n = x.rows(), d = x.cols();
  ProbeParams p;
  p.weight = Eigen::MatrixXd::Zero(d, n_classes);
  p.bias = Eigen::VectorXd::Zero(n_classes);

  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, n_classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    int label = y[static_cast<size_t>(i)];
    if (label < 0 || label >= n_classes) fail_invalid("fit_logistic: label out of range");
    onehot(i, label) = 1.0;
  }

  double inv_n = 1.0 / static_cast<double>(n);
  for (int e = 0; e < epochs; ++e) {
    Eigen::MatrixXd logits = (x * p.weight).rowwise() + p.bias.transpose();
    // Row-wise softmax with max subtraction.
    Eigen::MatrixXd probs(n, n_classes);
    for (Eigen::Index i = 0; i < n; ++i) {
      double mx = logits.row(i).maxCoeff();
      Eigen::ArrayXd ex = (logits.row(i).array() - mx).exp();
      probs.row(i) = (ex / ex.sum()).matrix();
    }
    Eigen::MatrixXd diff = (probs - onehot) * inv_n;
    p.weight -= lr * (x.transpose() * diff);
    p.bias -= lr * diff.colwise().sum().transpose();
  }
  return p;
}

std::vector<int> predict_logistic(const ProbeParams& probe, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd logits = (x * probe.weight).rowwise() + probe.bias.transpose();
  std::vector<int> out(static_cast<size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    double bv = logits(i, 0);
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(i, c) > bv) {
        bv = logits(i, c);
        best = static_cast<int>(c);
      }
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

Eigen::MatrixXd embed_dataset(const ParamMap& theta, const EncoderArch& arch,
                              const Dataset& data) {
  if (data.empty()) fail_invalid("embed_dataset: empty dataset");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(data.size()), arch.embed_dim);
  const int chunk = 128;
  for (size_t start = 0; start < data.size(); start += chunk) {
    size_t end = std::min(data.size(), start + chunk);
    std::vector<const Image*> ptrs;
    ptrs.reserve(end - start);
    for (size_t i = start; i < end; ++i) ptrs.push_back(&data[i]);
    Tensor z = encode(to_batch(ptrs), theta, arch);
    for (size_t i = start; i < end; ++i)
      for (int j = 0; j < arch.embed_dim; ++j)
        out(static_cast<Eigen::Index>(i), j) =
            z.array()[static_cast<Eigen::Index>(i - start) * arch.embed_dim + j];
  }
  return out;
}

ProbeParams train_probe(const ParamMap& theta, const EncoderArch& arch, const Dataset& labeled,
                        int epochs, double lr) {
  Eigen::MatrixXd x = embed_dataset(theta, arch, labeled);
  std::vector<int> y;
  y.reserve(labeled.size());
  int n_classes = 0;
  for (const auto& img : labeled) {
    y.push_back(img.label);
    n_classes = std::max(n_classes, img.label + 1);
  }
  return fit_logistic(x, y, n_classes, epochs, lr);
}

double compute_acc(const ParamMap& theta, const EncoderArch& arch, const ProbeParams& probe,
                   const Dataset& test) {
  if (test.empty()) fail_invalid("compute_acc: empty test set");
  Eigen::MatrixXd x = embed_dataset(theta, arch, test);
  std::vector<int> pred = predict_logistic(probe, x);
  int correct = 0;
  for (size_t i = 0; i < test.size(); ++i)
    if (pred[i] == test[i].label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

double compute_asr(const ParamMap& theta, const EncoderArch& arch, const ProbeParams& probe,
                   const Dataset& test, const std::vector<SubTrigger>& global_trigger,
                   int target_class, bool exclude_target) {
  Dataset triggered;
  triggered.reserve(test.size());
  for (const auto& img : test) {
    if (exclude_target && img.label == target_class) continue;
    triggered.push_back(apply_global_trigger(img, global_trigger));
  }
  if (triggered.empty()) fail_invalid("compute_asr: no evaluable samples after exclusion");
  Eigen::MatrixXd x = embed_dataset(theta, arch, triggered);
  std::vector<int> pred = predict_logistic(probe, x);
  int hits = 0;
  for (int p : pred)
    if (p == target_class) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double pcm(const ParamMap& theta, const EncoderArch& arch, const Tensor& clean_batch,
           const Tensor& triggered_batch) {
  if (clean_batch.extent(0) == 0 || triggered_batch.extent(0) == 0)
    fail_invalid("pcm: empty batch");
  if (clean_batch.extent(0) != triggered_batch.extent(0))
    fail_invalid("pcm: batches must have equal size");
  Tensor zc = col_means(encode(clean_batch, theta, arch));
  Tensor zt = col_means(encode(triggered_batch, theta, arch));
  return std::sqrt((zt.array() - zc.array()).square().sum());
}

ParamMap robust_fedavg_clip(std::span<const ParamMap> models, const ParamMap& prev,
                            double clip_norm) {
  if (models.empty()) fail_invalid("robust_fedavg_clip: no models");
  if (!(clip_norm > 0.0)) fail_invalid("robust_fedavg_clip: clip_norm must be positive");
  ParamMap acc;
  for (size_t i = 0; i < models.size(); ++i) {
    ParamMap delta = params_sub(models[i], prev);
    double norm = params_norm(delta);
    if (norm > clip_norm) delta = params_scale(delta, clip_norm / norm);
    acc = i == 0 ? std::move(delta) : params_add(acc, delta);
  }
  return params_axpy(prev, 1.0 / static_cast<double>(models.size()), acc);
}

ParamMap robust_fedavg_trimmed(std::span<const ParamMap> models, int trim_k) {
  if (models.empty()) fail_invalid("robust_fedavg_trimmed: no models");
  if (trim_k < 0) fail_invalid("robust_fedavg_trimmed: trim_k must be non-negative");
  int n = static_cast<int>(models.size());
  if (2 * trim_k >= n)
    fail_invalid("robust_fedavg_trimmed: trim_k=" + std::to_string(trim_k) +
                 " leaves no values out of " + std::to_string(n) + " models");
  for (size_t i = 1; i < models.size(); ++i)
    check_same_schema(models[0], models[i], "robust_fedavg_trimmed");

  ParamMap out = detached(models[0]);
  std::vector<std::pair<double, int>> vals(static_cast<size_t>(n));
  std::vector<bool> keep(static_cast<size_t>(n));
  for (auto& [name, t] : out) {
    Eigen::ArrayXd res(t.size());
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      for (int m = 0; m < n; ++m)
        vals[static_cast<size_t>(m)] = {models[static_cast<size_t>(m)].at(name).array()[j], m};
      std::sort(vals.begin(), vals.end());
      std::fill(keep.begin(), keep.end(), true);
      for (int k = 0; k < trim_k; ++k) {
        keep[static_cast<size_t>(vals[static_cast<size_t>(k)].second)] = false;
        keep[static_cast<size_t>(vals[static_cast<size_t>(n - 1 - k)].second)] = false;
      }
      // Sum survivors in client order so trim_k = 0 matches fedavg exactly.
      double acc = 0.0;
      for (int m = 0; m < n; ++m)
        if (keep[static_cast<size_t>(m)]) acc += models[static_cast<size_t>(m)].at(name).array()[j];
      res[j] = acc / static_cast<double>(n - 2 * trim_k);
    }
    t = Tensor::from_array(t.shape(), std::move(res));
  }
  return out;
}

}  // namespace fssl
