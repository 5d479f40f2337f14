#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "fssl/common.hpp"
#include "fssl/rng.hpp"

namespace fssl {

struct TensorNode;

// Per-backward-pass adjoint buffers. Leaf gradients are accumulated into the
// nodes themselves at the end of the pass; intermediate adjoints live only
// here, so repeated backward calls never double-count interior nodes.
class GradSink {
 public:
  bool wants(const TensorNode* n) const;
  void accum(const std::shared_ptr<TensorNode>& n, const Eigen::ArrayXd& g);
  const Eigen::ArrayXd* find(const TensorNode* n) const;
  Eigen::ArrayXd& slot(const std::shared_ptr<TensorNode>& n);

 private:
  std::unordered_map<const TensorNode*, Eigen::ArrayXd> adj_;
  friend void backward(const class Tensor& loss);
};

struct TensorNode {
  Shape shape;
  Eigen::ArrayXd data;  // flat, row-major
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Receives this node's adjoint and scatters into the parents' slots.
  std::function<void(const Eigen::ArrayXd&, GradSink&)> backprop;
  Eigen::ArrayXd grad;  // leaf accumulation; size 0 until first backward
};

// Dense double tensor with reverse-mode autodiff. Value-semantic handle:
// copies share the immutable node, ops build a DAG of fresh nodes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor constant(Shape s, double v, bool requires_grad = false);
  static Tensor from_array(Shape s, Eigen::ArrayXd d, bool requires_grad = false);
  static Tensor from_values(Shape s, const std::vector<double>& v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor uniform(Shape s, Rng& rng, double lo, double hi, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  int ndim() const { return static_cast<int>(n_->shape.size()); }
  int extent(int i) const { return n_->shape[static_cast<size_t>(i)]; }
  Eigen::Index size() const { return n_->data.size(); }
  const Eigen::ArrayXd& array() const { return n_->data; }
  double value() const;                       // scalar tensors only
  double at(const std::vector<int>& idx) const;

  bool requires_grad() const { return n_->requires_grad; }
  bool has_grad() const { return n_->grad.size() > 0; }
  const Eigen::ArrayXd& grad() const;
  void zero_grad() const { if (n_->grad.size() > 0) n_->grad.setZero(); }
  void clear_grad() const { n_->grad.resize(0); }

  // A no-grad leaf with the same values (drops graph history).
  Tensor detached() const;

  const std::shared_ptr<TensorNode>& node() const { return n_; }
  static Tensor wrap(std::shared_ptr<TensorNode> n) { Tensor t; t.n_ = std::move(n); return t; }

 private:
  std::shared_ptr<TensorNode> n_;
};

// --- elementwise and affine ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

// --- shape ---
Tensor reshape(const Tensor& a, Shape s);
Tensor concat(const Tensor& a, const Tensor& b);  // 1-D
Tensor row(const Tensor& a, int i);               // [N,M] -> [M]
Tensor transpose(const Tensor& a);                // [N,M] -> [M,N]

// --- reductions ---
Tensor sum(const Tensor& a);       // -> scalar
Tensor mean(const Tensor& a);      // -> scalar
Tensor row_sums(const Tensor& a);  // [N,M] -> [N]
Tensor col_means(const Tensor& a); // [N,M] -> [M]

// out[i] = a[i, idx[i]]
Tensor select_cols(const Tensor& a, const std::vector<int>& idx);

// --- linear algebra / nn ---
Tensor matmul(const Tensor& a, const Tensor& b);           // [N,K]x[K,M]
Tensor add_row_bias(const Tensor& x, const Tensor& b);     // [N,M] + [M]
Tensor add_channel_bias(const Tensor& x, const Tensor& b); // [N,C,H,W] + [C]
Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int padding);
Tensor avg_pool2d(const Tensor& x, int window);
Tensor cosine_similarity(const Tensor& a, const Tensor& b);  // -> scalar in [-1,1]
Tensor l2_normalize_rows(const Tensor& x);

// Reverse-mode sweep from a scalar loss. Leaf tensors with requires_grad
// accumulate into their grad buffers; call zero_grad/clear_grad to reset.
void backward(const Tensor& loss);

bool all_finite(const Tensor& t);

}  // namespace fssl
