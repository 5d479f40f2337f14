#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "fssl/params.hpp"
#include "fssl/tensor.hpp"

namespace fssl::test {

// Central finite differences against the analytic gradient of `make_loss`,
// evaluated at `point`. The loss builder must be a pure function of its
// input so repeated evaluation at shifted points is meaningful.
struct GradCheckResult {
  double max_rel_err = 0.0;
  bool ok = true;
};

inline GradCheckResult check_gradient(
    const std::function<Tensor(const Tensor&)>& make_loss, const Tensor& point,
    double eps = 1e-5, double tol = 1e-4, double denom_floor = 1e-3) {
  Tensor leaf = Tensor::from_array(point.shape(), point.array(), true);
  Tensor loss = make_loss(leaf);
  backward(loss);
  Eigen::ArrayXd analytic =
      leaf.has_grad() ? leaf.grad() : Eigen::ArrayXd::Zero(leaf.size());

  GradCheckResult r;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    Eigen::ArrayXd plus = point.array();
    Eigen::ArrayXd minus = point.array();
    plus[i] += eps;
    minus[i] -= eps;
    double lp = make_loss(Tensor::from_array(point.shape(), plus)).value();
    double lm = make_loss(Tensor::from_array(point.shape(), minus)).value();
    double fd = (lp - lm) / (2.0 * eps);
    double denom = std::max({std::abs(fd), std::abs(analytic[i]), denom_floor});
    double rel = std::abs(fd - analytic[i]) / denom;
    r.max_rel_err = std::max(r.max_rel_err, rel);
    if (rel > tol) r.ok = false;
  }
  return r;
}

inline Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return Tensor::uniform(std::move(s), rng, lo, hi);
}

inline bool approx(double a, double b, double tol = 1e-9) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace fssl::test
