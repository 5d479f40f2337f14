#include "fssl/params.hpp"

#include <cmath>

namespace fssl {

void OptimizerConfig::validate() const {
  if (learning_rate <= 0.0) fail_invalid("optimizer: learning_rate must be positive");
  if (momentum < 0.0) fail_invalid("optimizer: momentum must be non-negative");
}

ParamMap with_grad(const ParamMap& p) {
  ParamMap out;
  for (const auto& [name, t] : p) out.emplace(name, Tensor::from_array(t.shape(), t.array(), true));
  return out;
}

ParamMap detached(const ParamMap& p) {
  ParamMap out;
  for (const auto& [name, t] : p) out.emplace(name, t.detached());
  return out;
}

void zero_grad(ParamMap& p) {
  for (auto& [name, t] : p) t.clear_grad();
}

ParamMap sgd_step(const ParamMap& p, const OptimizerConfig& cfg) {
  SgdOptimizer opt(cfg);
  return opt.step(p);
}

SgdOptimizer::SgdOptimizer(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

ParamMap SgdOptimizer::step(const ParamMap& p) {
  ParamMap out;
  for (const auto& [name, t] : p) {
    Eigen::ArrayXd g =
        t.has_grad() ? t.grad() : Eigen::ArrayXd::Zero(t.size());
    if (cfg_.momentum > 0.0) {
      auto& v = velocity_[name];
      if (v.size() == 0) v = Eigen::ArrayXd::Zero(t.size());
      v = cfg_.momentum * v + g;
      g = v;
    }
    out.emplace(name, Tensor::from_array(t.shape(), t.array() - cfg_.learning_rate * g, true));
  }
  return out;
}

Tensor mlp_forward(const Tensor& x, const ParamMap& weights) {
  bool vector_in = x.ndim() == 1;
  Tensor h = vector_in ? reshape(x, {1, x.extent(0)}) : x;
  if (h.ndim() != 2) fail_invalid("mlp_forward: input must be 1-d or 2-d");
  int layer = 0;
  for (;; ++layer) {
    std::string prefix = "fc" + std::to_string(layer);
    auto wi = weights.find(prefix + ".w");
    if (wi == weights.end()) break;
    auto bi = weights.find(prefix + ".b");
    if (bi == weights.end()) fail_invalid("mlp_forward: missing bias " + prefix + ".b");
    if (layer > 0) h = relu(h);
    h = add_row_bias(matmul(h, wi->second), bi->second);
  }
  if (layer == 0) fail_invalid("mlp_forward: no fc0.w layer in weights");
  return vector_in ? reshape(h, {h.extent(1)}) : h;
}

bool same_schema(const ParamMap& a, const ParamMap& b) {
  if (a.size() != b.size()) return false;
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first) return false;
    if (ia->second.shape() != ib->second.shape()) return false;
  }
  return true;
}

void check_same_schema(const ParamMap& a, const ParamMap& b, const char* context) {
  if (!same_schema(a, b))
    fail_invalid(std::string(context) + ": parameter schemas do not match");
}

namespace {
template <class F>
ParamMap zip(const ParamMap& a, const ParamMap& b, const char* ctx, F f) {
  check_same_schema(a, b, ctx);
  ParamMap out;
  auto ib = b.begin();
  for (auto ia = a.begin(); ia != a.end(); ++ia, ++ib)
    out.emplace(ia->first,
                Tensor::from_array(ia->second.shape(), f(ia->second.array(), ib->second.array())));
  return out;
}
}  // namespace

ParamMap params_add(const ParamMap& a, const ParamMap& b) {
  return zip(a, b, "params_add",
             [](const Eigen::ArrayXd& x, const Eigen::ArrayXd& y) { return (x + y).eval(); });
}

ParamMap params_sub(const ParamMap& a, const ParamMap& b) {
  return zip(a, b, "params_sub",
             [](const Eigen::ArrayXd& x, const Eigen::ArrayXd& y) { return (x - y).eval(); });
}

ParamMap params_scale(const ParamMap& a, double c) {
  ParamMap out;
  for (const auto& [name, t] : a)
    out.emplace(name, Tensor::from_array(t.shape(), (t.array() * c).eval()));
  return out;
}

ParamMap params_axpy(const ParamMap& base, double coeff, const ParamMap& delta) {
  check_same_schema(base, delta, "params_axpy");
  ParamMap out;
  auto id = delta.begin();
  for (auto ib = base.begin(); ib != base.end(); ++ib, ++id)
    out.emplace(ib->first, Tensor::from_array(
                               ib->second.shape(),
                               (ib->second.array() + coeff * id->second.array()).eval()));
  return out;
}

ParamMap params_mean(std::span<const ParamMap> models) {
  if (models.empty()) fail_invalid("params_mean: need at least one model");
  ParamMap out = detached(models[0]);
  for (size_t i = 1; i < models.size(); ++i) {
    check_same_schema(out, models[i], "params_mean");
    auto im = models[i].begin();
    for (auto io = out.begin(); io != out.end(); ++io, ++im) {
      Eigen::ArrayXd acc = io->second.array() + im->second.array();
      io->second = Tensor::from_array(io->second.shape(), std::move(acc));
    }
  }
  double inv = 1.0 / static_cast<double>(models.size());
  return params_scale(out, inv);
}

double params_dot(const ParamMap& a, const ParamMap& b) {
  check_same_schema(a, b, "params_dot");
  double acc = 0.0;
  auto ib = b.begin();
  for (auto ia = a.begin(); ia != a.end(); ++ia, ++ib)
    acc += (ia->second.array() * ib->second.array()).sum();
  return acc;
}

double params_norm(const ParamMap& a) {
  double acc = 0.0;
  for (const auto& [name, t] : a) acc += t.array().square().sum();
  return std::sqrt(acc);
}

Eigen::VectorXd params_flatten(const ParamMap& a) {
  Eigen::VectorXd v(params_numel(a));
  Eigen::Index off = 0;
  for (const auto& [name, t] : a) {
    v.segment(off, t.size()) = t.array().matrix();
    off += t.size();
  }
  return v;
}

int64_t params_numel(const ParamMap& a) {
  int64_t n = 0;
  for (const auto& [name, t] : a) n += t.size();
  return n;
}

}  // namespace fssl
