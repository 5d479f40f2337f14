#pragma once

#include <map>
#include <span>
#include <string>

#include "fssl/tensor.hpp"

namespace fssl {

// Ordered (lexicographic) name -> tensor map; the unit of federation,
// checkpointing and coalition aggregation.
using ParamMap = std::map<std::string, Tensor>;

struct OptimizerConfig {
  double learning_rate = 0.05;
  double momentum = 0.0;
  void validate() const;
};

// Grad-leaf copies ready for a training step.
ParamMap with_grad(const ParamMap& p);
// Plain value copies (drops graph history and grads).
ParamMap detached(const ParamMap& p);
void zero_grad(ParamMap& p);

// p - lr * grad(p), momentum-free. Missing grads count as zero. Returns
// fresh grad-leaves so the next step starts from a clean tape.
ParamMap sgd_step(const ParamMap& p, const OptimizerConfig& cfg);

// SGD with optional momentum; keeps per-parameter velocity across steps.
class SgdOptimizer {
 public:
  explicit SgdOptimizer(OptimizerConfig cfg);
  ParamMap step(const ParamMap& p);
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::map<std::string, Eigen::ArrayXd> velocity_;
};

// Multilayer perceptron over layers named fc0, fc1, ...: x @ fc<i>.w + fc<i>.b
// with relu between layers and a linear last layer. Accepts [N,D] or [D].
Tensor mlp_forward(const Tensor& x, const ParamMap& weights);

// --- value arithmetic (no autodiff involvement) ---
bool same_schema(const ParamMap& a, const ParamMap& b);
void check_same_schema(const ParamMap& a, const ParamMap& b, const char* context);
ParamMap params_add(const ParamMap& a, const ParamMap& b);
ParamMap params_sub(const ParamMap& a, const ParamMap& b);
ParamMap params_scale(const ParamMap& a, double c);
ParamMap params_axpy(const ParamMap& base, double coeff, const ParamMap& delta);
ParamMap params_mean(std::span<const ParamMap> models);
double params_dot(const ParamMap& a, const ParamMap& b);
double params_norm(const ParamMap& a);
Eigen::VectorXd params_flatten(const ParamMap& a);
int64_t params_numel(const ParamMap& a);

}  // namespace fssl
