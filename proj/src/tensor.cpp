#include "fssl/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace fssl {

namespace {

using Eigen::ArrayXd;
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

std::shared_ptr<TensorNode> make_leaf(Shape s, ArrayXd d, bool rg) {
  if (shape_numel(s) != d.size())
    fail_invalid("tensor: shape " + shape_str(s) + " does not match data length " +
                 std::to_string(d.size()));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(s);
  n->data = std::move(d);
  n->requires_grad = rg;
  return n;
}

// Builds an op node. If no parent requires grad the graph edges are dropped
// and the node degenerates to a constant, which keeps no-grad forward passes
// (frozen global models, evaluation) cheap.
Tensor make_op(Shape s, ArrayXd d, const char* op,
               std::vector<std::shared_ptr<TensorNode>> parents,
               std::function<void(const ArrayXd&, GradSink&)> backprop) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(s);
  n->data = std::move(d);
  n->op = op;
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return Tensor::wrap(std::move(n));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    fail_invalid(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                 shape_str(b.shape()));
}

void check_ndim(const Tensor& a, int nd, const char* op) {
  if (a.ndim() != nd)
    fail_invalid(std::string(op) + ": expected " + std::to_string(nd) + "-d tensor, got " +
                 shape_str(a.shape()));
}

}  // namespace

// --- GradSink ---

bool GradSink::wants(const TensorNode* n) const { return n->requires_grad; }

void GradSink::accum(const std::shared_ptr<TensorNode>& n, const ArrayXd& g) {
  if (!n->requires_grad) return;
  auto& a = adj_[n.get()];
  if (a.size() == 0)
    a = g;
  else
    a += g;
}

Eigen::ArrayXd& GradSink::slot(const std::shared_ptr<TensorNode>& n) {
  auto& a = adj_[n.get()];
  if (a.size() == 0) a = ArrayXd::Zero(n->data.size());
  return a;
}

const ArrayXd* GradSink::find(const TensorNode* n) const {
  auto it = adj_.find(n);
  return it == adj_.end() ? nullptr : &it->second;
}

// --- Tensor basics ---

Tensor Tensor::zeros(Shape s, bool rg) {
  auto n = make_leaf(s, ArrayXd::Zero(shape_numel(s)), rg);
  return wrap(std::move(n));
}

Tensor Tensor::constant(Shape s, double v, bool rg) {
  auto n = make_leaf(s, ArrayXd::Constant(shape_numel(s), v), rg);
  return wrap(std::move(n));
}

Tensor Tensor::from_array(Shape s, ArrayXd d, bool rg) {
  return wrap(make_leaf(std::move(s), std::move(d), rg));
}

Tensor Tensor::from_values(Shape s, const std::vector<double>& v, bool rg) {
  ArrayXd d(static_cast<Eigen::Index>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) d[static_cast<Eigen::Index>(i)] = v[i];
  return wrap(make_leaf(std::move(s), std::move(d), rg));
}

Tensor Tensor::scalar(double v, bool rg) { return constant({1}, v, rg); }

Tensor Tensor::uniform(Shape s, Rng& rng, double lo, double hi, bool rg) {
  ArrayXd d(shape_numel(s));
  for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = rng.uniform(lo, hi);
  return wrap(make_leaf(std::move(s), std::move(d), rg));
}

double Tensor::value() const {
  if (size() != 1) fail_invalid("value(): tensor " + shape_str(shape()) + " is not a scalar");
  return n_->data[0];
}

double Tensor::at(const std::vector<int>& idx) const {
  if (static_cast<int>(idx.size()) != ndim())
    fail_invalid("at(): index rank mismatch for " + shape_str(shape()));
  int64_t flat = 0;
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= n_->shape[i]) fail_invalid("at(): index out of range");
    flat = flat * n_->shape[i] + idx[i];
  }
  return n_->data[static_cast<Eigen::Index>(flat)];
}

const ArrayXd& Tensor::grad() const {
  if (n_->grad.size() == 0) fail("grad(): no gradient has been accumulated on this tensor");
  return n_->grad;
}

Tensor Tensor::detached() const { return from_array(shape(), array(), false); }

// --- elementwise ---

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  auto pa = a.node(), pb = b.node();
  return make_op(a.shape(), a.array() + b.array(), "add", {pa, pb},
                 [pa, pb](const ArrayXd& g, GradSink& s) {
                   s.accum(pa, g);
                   s.accum(pb, g);
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  auto pa = a.node(), pb = b.node();
  return make_op(a.shape(), a.array() - b.array(), "sub", {pa, pb},
                 [pa, pb](const ArrayXd& g, GradSink& s) {
                   s.accum(pa, g);
                   if (s.wants(pb.get())) s.accum(pb, (-g).eval());
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  auto pa = a.node(), pb = b.node();
  return make_op(a.shape(), a.array() * b.array(), "mul", {pa, pb},
                 [pa, pb](const ArrayXd& g, GradSink& s) {
                   if (s.wants(pa.get())) s.accum(pa, (g * pb->data).eval());
                   if (s.wants(pb.get())) s.accum(pb, (g * pa->data).eval());
                 });
}

Tensor scale(const Tensor& a, double c) {
  auto pa = a.node();
  return make_op(a.shape(), (a.array() * c).eval(), "scale", {pa},
                 [pa, c](const ArrayXd& g, GradSink& s) { s.accum(pa, (g * c).eval()); });
}

Tensor relu(const Tensor& a) {
  auto pa = a.node();
  return make_op(a.shape(), a.array().max(0.0), "relu", {pa},
                 [pa](const ArrayXd& g, GradSink& s) {
                   s.accum(pa, (g * (pa->data > 0.0).cast<double>()).eval());
                 });
}

Tensor sigmoid(const Tensor& a) {
  auto pa = a.node();
  ArrayXd y = 1.0 / (1.0 + (-a.array()).exp());
  auto yc = y;
  return make_op(a.shape(), std::move(y), "sigmoid", {pa},
                 [pa, yc](const ArrayXd& g, GradSink& s) {
                   s.accum(pa, (g * yc * (1.0 - yc)).eval());
                 });
}

Tensor exp(const Tensor& a) {
  auto pa = a.node();
  ArrayXd y = a.array().exp();
  auto yc = y;
  return make_op(a.shape(), std::move(y), "exp", {pa},
                 [pa, yc](const ArrayXd& g, GradSink& s) { s.accum(pa, (g * yc).eval()); });
}

Tensor log(const Tensor& a) {
  if ((a.array() <= 0.0).any()) fail_invalid("log: non-positive input");
  auto pa = a.node();
  return make_op(a.shape(), a.array().log(), "log", {pa},
                 [pa](const ArrayXd& g, GradSink& s) { s.accum(pa, (g / pa->data).eval()); });
}

// --- shape ---

Tensor reshape(const Tensor& a, Shape s) {
  if (shape_numel(s) != a.size())
    fail_invalid("reshape: " + shape_str(a.shape()) + " -> " + shape_str(s) +
                 " changes element count");
  auto pa = a.node();
  return make_op(std::move(s), a.array(), "reshape", {pa},
                 [pa](const ArrayXd& g, GradSink& s) { s.accum(pa, g); });
}

Tensor concat(const Tensor& a, const Tensor& b) {
  check_ndim(a, 1, "concat");
  check_ndim(b, 1, "concat");
  Eigen::Index na = a.size(), nb = b.size();
  ArrayXd d(na + nb);
  d.head(na) = a.array();
  d.tail(nb) = b.array();
  auto pa = a.node(), pb = b.node();
  return make_op({static_cast<int>(na + nb)}, std::move(d), "concat", {pa, pb},
                 [pa, pb, na, nb](const ArrayXd& g, GradSink& s) {
                   if (s.wants(pa.get())) s.accum(pa, g.head(na).eval());
                   if (s.wants(pb.get())) s.accum(pb, g.tail(nb).eval());
                 });
}

Tensor row(const Tensor& a, int i) {
  check_ndim(a, 2, "row");
  int n = a.extent(0), m = a.extent(1);
  if (i < 0 || i >= n) fail_invalid("row: index out of range");
  ArrayXd d = a.array().segment(static_cast<Eigen::Index>(i) * m, m);
  auto pa = a.node();
  return make_op({m}, std::move(d), "row", {pa},
                 [pa, i, m](const ArrayXd& g, GradSink& s) {
                   if (!s.wants(pa.get())) return;
                   auto& slot = s.slot(pa);
                   slot.segment(static_cast<Eigen::Index>(i) * m, m) += g;
                 });
}

Tensor transpose(const Tensor& a) {
  check_ndim(a, 2, "transpose");
  int n = a.extent(0), m = a.extent(1);
  ArrayXd d(a.size());
  CMapRM A(a.array().data(), n, m);
  MapRM D(d.data(), m, n);
  D = A.transpose();
  auto pa = a.node();
  return make_op({m, n}, std::move(d), "transpose", {pa},
                 [pa, n, m](const ArrayXd& g, GradSink& s) {
                   if (!s.wants(pa.get())) return;
                   ArrayXd gi(g.size());
                   CMapRM G(g.data(), m, n);
                   MapRM GI(gi.data(), n, m);
                   GI = G.transpose();
                   s.accum(pa, gi);
                 });
}

// --- reductions ---

Tensor sum(const Tensor& a) {
  auto pa = a.node();
  double v = a.array().sum();
  return make_op({1}, ArrayXd::Constant(1, v), "sum", {pa},
                 [pa](const ArrayXd& g, GradSink& s) {
                   s.accum(pa, ArrayXd::Constant(pa->data.size(), g[0]));
                 });
}

Tensor mean(const Tensor& a) {
  auto pa = a.node();
  double inv = 1.0 / static_cast<double>(a.size());
  double v = a.array().sum() * inv;
  return make_op({1}, ArrayXd::Constant(1, v), "mean", {pa},
                 [pa, inv](const ArrayXd& g, GradSink& s) {
                   s.accum(pa, ArrayXd::Constant(pa->data.size(), g[0] * inv));
                 });
}

Tensor row_sums(const Tensor& a) {
  check_ndim(a, 2, "row_sums");
  int n = a.extent(0), m = a.extent(1);
  ArrayXd d(n);
  CMapRM A(a.array().data(), n, m);
  for (int i = 0; i < n; ++i) d[i] = A.row(i).sum();
  auto pa = a.node();
  return make_op({n}, std::move(d), "row_sums", {pa},
                 [pa, n, m](const ArrayXd& g, GradSink& s) {
                   if (!s.wants(pa.get())) return;
                   ArrayXd gi(static_cast<Eigen::Index>(n) * m);
                   for (int i = 0; i < n; ++i)
                     gi.segment(static_cast<Eigen::Index>(i) * m, m).setConstant(g[i]);
                   s.accum(pa, gi);
                 });
}

Tensor col_means(const Tensor& a) {
  check_ndim(a, 2, "col_means");
  int n = a.extent(0), m = a.extent(1);
  ArrayXd d = ArrayXd::Zero(m);
  CMapRM A(a.array().data(), n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) d[j] += A(i, j);
  d /= static_cast<double>(n);
  auto pa = a.node();
  return make_op({m}, std::move(d), "col_means", {pa},
                 [pa, n, m](const ArrayXd& g, GradSink& s) {
                   if (!s.wants(pa.get())) return;
                   ArrayXd gi(static_cast<Eigen::Index>(n) * m);
                   double inv = 1.0 / n;
                   for (int i = 0; i < n; ++i)
                     gi.segment(static_cast<Eigen::Index>(i) * m, m) = g * inv;
                   s.accum(pa, gi);
                 });
}

Tensor select_cols(const Tensor& a, const std::vector<int>& idx) {
  check_ndim(a, 2, "select_cols");
  int n = a.extent(0), m = a.extent(1);
  if (static_cast<int>(idx.size()) != n)
    fail_invalid("select_cols: need one index per row");
  ArrayXd d(n);
  for (int i = 0; i < n; ++i) {
    if (idx[static_cast<size_t>(i)] < 0 || idx[static_cast<size_t>(i)] >= m)
      fail_invalid("select_cols: index out of range");
    d[i] = a.array()[static_cast<Eigen::Index>(i) * m + idx[static_cast<size_t>(i)]];
  }
  auto pa = a.node();
  auto ix = idx;
  return make_op({n}, std::move(d), "select_cols", {pa},
                 [pa, ix, m](const ArrayXd& g, GradSink& s) {
                   if (!s.wants(pa.get())) return;
                   auto& slot = s.slot(pa);
                   for (int i = 0; i < static_cast<int>(ix.size()); ++i)
                     slot[static_cast<Eigen::Index>(i) * m + ix[static_cast<size_t>(i)]] += g[i];
                 });
}

// --- linear algebra / nn ---

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_ndim(a, 2, "matmul");
  check_ndim(b, 2, "matmul");
  int n = a.extent(0), k = a.extent(1), k2 = b.extent(0), m = b.extent(1);
  if (k != k2)
    fail_invalid("matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                 shape_str(b.shape()));
  ArrayXd d(static_cast<Eigen::Index>(n) * m);
  {
    CMapRM A(a.array().data(), n, k);
    CMapRM B(b.array().data(), k, m);
    MapRM D(d.data(), n, m);
    D.noalias() = A * B;
  }
  auto pa = a.node(), pb = b.node();
  return make_op({n, m}, std::move(d), "matmul", {pa, pb},
                 [pa, pb, n, k, m](const ArrayXd& g, GradSink& s) {
                   CMapRM G(g.data(), n, m);
                   CMapRM A(pa->data.data(), n, k);
                   CMapRM B(pb->data.data(), k, m);
                   if (s.wants(pa.get())) {
                     ArrayXd ga(static_cast<Eigen::Index>(n) * k);
                     MapRM GA(ga.data(), n, k);
                     GA.noalias() = G * B.transpose();
                     s.accum(pa, ga);
                   }
                   if (s.wants(pb.get())) {
                     ArrayXd gb(static_cast<Eigen::Index>(k) * m);
                     MapRM GB(gb.data(), k, m);
                     GB.noalias() = A.transpose() * G;
                     s.accum(pb, gb);
                   }
                 });
}

Tensor add_row_bias(const Tensor& x, const Tensor& b) {
  check_ndim(x, 2, "add_row_bias");
  check_ndim(b, 1, "add_row_bias");
  int n = x.extent(0), m = x.extent(1);
  if (b.extent(0) != m)
    fail_invalid("add_row_bias: bias length " + shape_str(b.shape()) + " vs rows of " +
                 shape_str(x.shape()));
  ArrayXd d = x.array();
  for (int i = 0; i < n; ++i) d.segment(static_cast<Eigen::Index>(i) * m, m) += b.array();
  auto px = x.node(), pb = b.node();
  return make_op({n, m}, std::move(d), "add_row_bias", {px, pb},
                 [px, pb, n, m](const ArrayXd& g, GradSink& s) {
                   s.accum(px, g);
                   if (s.wants(pb.get())) {
                     ArrayXd gb = ArrayXd::Zero(m);
                     for (int i = 0; i < n; ++i)
                       gb += g.segment(static_cast<Eigen::Index>(i) * m, m);
                     s.accum(pb, gb);
                   }
                 });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  check_ndim(x, 4, "add_channel_bias");
  check_ndim(b, 1, "add_channel_bias");
  int n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  if (b.extent(0) != c) fail_invalid("add_channel_bias: bias/channel mismatch");
  Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
  ArrayXd d = x.array();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      d.segment((static_cast<Eigen::Index>(i) * c + j) * hw, hw) += b.array()[j];
  auto px = x.node(), pb = b.node();
  return make_op({n, c, h, w}, std::move(d), "add_channel_bias", {px, pb},
                 [px, pb, n, c, hw](const ArrayXd& g, GradSink& s) {
                   s.accum(px, g);
                   if (s.wants(pb.get())) {
                     ArrayXd gb = ArrayXd::Zero(c);
                     for (int i = 0; i < n; ++i)
                       for (int j = 0; j < c; ++j)
                         gb[j] += g.segment((static_cast<Eigen::Index>(i) * c + j) * hw, hw).sum();
                     s.accum(pb, gb);
                   }
                 });
}

namespace {

struct ConvDims {
  int n, c, h, w, co, kh, kw, stride, pad, ho, wo;
};

// Gathers conv patches into a (C*Kh*Kw) x (N*Ho*Wo) column matrix.
Eigen::MatrixXd im2col(const ArrayXd& x, const ConvDims& d) {
  Eigen::MatrixXd col = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(d.c) * d.kh * d.kw,
      static_cast<Eigen::Index>(d.n) * d.ho * d.wo);
  for (int nn = 0; nn < d.n; ++nn)
    for (int ho = 0; ho < d.ho; ++ho)
      for (int wo = 0; wo < d.wo; ++wo) {
        Eigen::Index q = (static_cast<Eigen::Index>(nn) * d.ho + ho) * d.wo + wo;
        int h0 = ho * d.stride - d.pad, w0 = wo * d.stride - d.pad;
        for (int cc = 0; cc < d.c; ++cc)
          for (int kh = 0; kh < d.kh; ++kh) {
            int hh = h0 + kh;
            if (hh < 0 || hh >= d.h) continue;
            for (int kw = 0; kw < d.kw; ++kw) {
              int ww = w0 + kw;
              if (ww < 0 || ww >= d.w) continue;
              Eigen::Index r = (static_cast<Eigen::Index>(cc) * d.kh + kh) * d.kw + kw;
              col(r, q) = x[((static_cast<Eigen::Index>(nn) * d.c + cc) * d.h + hh) * d.w + ww];
            }
          }
      }
  return col;
}

void col2im_accum(const Eigen::MatrixXd& col, const ConvDims& d, ArrayXd& gx) {
  for (int nn = 0; nn < d.n; ++nn)
    for (int ho = 0; ho < d.ho; ++ho)
      for (int wo = 0; wo < d.wo; ++wo) {
        Eigen::Index q = (static_cast<Eigen::Index>(nn) * d.ho + ho) * d.wo + wo;
        int h0 = ho * d.stride - d.pad, w0 = wo * d.stride - d.pad;
        for (int cc = 0; cc < d.c; ++cc)
          for (int kh = 0; kh < d.kh; ++kh) {
            int hh = h0 + kh;
            if (hh < 0 || hh >= d.h) continue;
            for (int kw = 0; kw < d.kw; ++kw) {
              int ww = w0 + kw;
              if (ww < 0 || ww >= d.w) continue;
              Eigen::Index r = (static_cast<Eigen::Index>(cc) * d.kh + kh) * d.kw + kw;
              gx[((static_cast<Eigen::Index>(nn) * d.c + cc) * d.h + hh) * d.w + ww] += col(r, q);
            }
          }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int padding) {
  check_ndim(x, 4, "conv2d");
  check_ndim(k, 4, "conv2d");
  if (stride < 1) fail_invalid("conv2d: stride must be positive");
  if (padding < 0) fail_invalid("conv2d: padding must be non-negative");
  ConvDims d;
  d.n = x.extent(0); d.c = x.extent(1); d.h = x.extent(2); d.w = x.extent(3);
  d.co = k.extent(0); d.kh = k.extent(2); d.kw = k.extent(3);
  d.stride = stride; d.pad = padding;
  if (k.extent(1) != d.c)
    fail_invalid("conv2d: input channels of " + shape_str(x.shape()) +
                 " do not match kernel " + shape_str(k.shape()));
  if (d.kh > d.h + 2 * padding || d.kw > d.w + 2 * padding)
    fail_invalid("conv2d: kernel " + shape_str(k.shape()) + " larger than padded input " +
                 shape_str(x.shape()));
  d.ho = (d.h + 2 * padding - d.kh) / stride + 1;
  d.wo = (d.w + 2 * padding - d.kw) / stride + 1;

  Eigen::MatrixXd col = im2col(x.array(), d);
  Eigen::Index ckk = static_cast<Eigen::Index>(d.c) * d.kh * d.kw;
  CMapRM K(k.array().data(), d.co, ckk);
  Eigen::MatrixXd out = K * col;  // co x (n*ho*wo)

  ArrayXd y(static_cast<Eigen::Index>(d.n) * d.co * d.ho * d.wo);
  for (int nn = 0; nn < d.n; ++nn)
    for (int co = 0; co < d.co; ++co)
      for (int ho = 0; ho < d.ho; ++ho)
        for (int wo = 0; wo < d.wo; ++wo)
          y[((static_cast<Eigen::Index>(nn) * d.co + co) * d.ho + ho) * d.wo + wo] =
              out(co, (static_cast<Eigen::Index>(nn) * d.ho + ho) * d.wo + wo);

  auto px = x.node(), pk = k.node();
  return make_op({d.n, d.co, d.ho, d.wo}, std::move(y), "conv2d", {px, pk},
                 [px, pk, d, ckk](const ArrayXd& g, GradSink& s) {
                   Eigen::MatrixXd gmat(d.co, static_cast<Eigen::Index>(d.n) * d.ho * d.wo);
                   for (int nn = 0; nn < d.n; ++nn)
                     for (int co = 0; co < d.co; ++co)
                       for (int ho = 0; ho < d.ho; ++ho)
                         for (int wo = 0; wo < d.wo; ++wo)
                           gmat(co, (static_cast<Eigen::Index>(nn) * d.ho + ho) * d.wo + wo) =
                               g[((static_cast<Eigen::Index>(nn) * d.co + co) * d.ho + ho) * d.wo +
                                 wo];
                   // Patches are recomputed here instead of cached on the node;
                   // memory stays flat across deep graphs.
                   if (s.wants(pk.get())) {
                     Eigen::MatrixXd col = im2col(px->data, d);
                     ArrayXd gk(pk->data.size());
                     MapRM GK(gk.data(), d.co, ckk);
                     GK.noalias() = gmat * col.transpose();
                     s.accum(pk, gk);
                   }
                   if (s.wants(px.get())) {
                     CMapRM K(pk->data.data(), d.co, ckk);
                     Eigen::MatrixXd gcol = K.transpose() * gmat;
                     ArrayXd gx = ArrayXd::Zero(px->data.size());
                     col2im_accum(gcol, d, gx);
                     s.accum(px, gx);
                   }
                 });
}

Tensor avg_pool2d(const Tensor& x, int window) {
  check_ndim(x, 4, "avg_pool2d");
  if (window < 1) fail_invalid("avg_pool2d: window must be positive");
  int n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  if (h % window != 0 || w % window != 0)
    fail_invalid("avg_pool2d: window " + std::to_string(window) +
                 " does not divide spatial extents of " + shape_str(x.shape()));
  int ho = h / window, wo = w / window;
  double inv = 1.0 / (static_cast<double>(window) * window);
  ArrayXd y(static_cast<Eigen::Index>(n) * c * ho * wo);
  const ArrayXd& xd = x.array();
  for (int nn = 0; nn < n; ++nn)
    for (int cc = 0; cc < c; ++cc)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          double acc = 0.0;
          for (int a = 0; a < window; ++a)
            for (int b = 0; b < window; ++b)
              acc += xd[((static_cast<Eigen::Index>(nn) * c + cc) * h + i * window + a) * w +
                        j * window + b];
          y[((static_cast<Eigen::Index>(nn) * c + cc) * ho + i) * wo + j] = acc * inv;
        }
  auto px = x.node();
  return make_op({n, c, ho, wo}, std::move(y), "avg_pool2d", {px},
                 [px, n, c, h, w, ho, wo, window, inv](const ArrayXd& g, GradSink& s) {
                   if (!s.wants(px.get())) return;
                   ArrayXd gx = ArrayXd::Zero(px->data.size());
                   for (int nn = 0; nn < n; ++nn)
                     for (int cc = 0; cc < c; ++cc)
                       for (int i = 0; i < ho; ++i)
                         for (int j = 0; j < wo; ++j) {
                           double gv =
                               g[((static_cast<Eigen::Index>(nn) * c + cc) * ho + i) * wo + j] *
                               inv;
                           for (int a = 0; a < window; ++a)
                             for (int b = 0; b < window; ++b)
                               gx[((static_cast<Eigen::Index>(nn) * c + cc) * h + i * window + a) *
                                      w +
                                  j * window + b] += gv;
                         }
                   s.accum(px, gx);
                 });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size())
    fail_invalid("cosine_similarity: length mismatch " + shape_str(a.shape()) + " vs " +
                 shape_str(b.shape()));
  double na = std::sqrt(a.array().square().sum());
  double nb = std::sqrt(b.array().square().sum());
  auto pa = a.node(), pb = b.node();
  if (na == 0.0 || nb == 0.0) {
    log_warn("cosine_similarity: zero-norm input, similarity defined as 0");
    return make_op({1}, ArrayXd::Zero(1), "cosine_similarity", {pa, pb},
                   [](const ArrayXd&, GradSink&) {});
  }
  double dot = (a.array() * b.array()).sum();
  double cosv = dot / (na * nb);
  return make_op({1}, ArrayXd::Constant(1, cosv), "cosine_similarity", {pa, pb},
                 [pa, pb, na, nb, cosv](const ArrayXd& g, GradSink& s) {
                   double gv = g[0];
                   if (s.wants(pa.get()))
                     s.accum(pa, (gv * (pb->data / (na * nb) - cosv * pa->data / (na * na))).eval());
                   if (s.wants(pb.get()))
                     s.accum(pb, (gv * (pa->data / (na * nb) - cosv * pb->data / (nb * nb))).eval());
                 });
}

Tensor l2_normalize_rows(const Tensor& x) {
  check_ndim(x, 2, "l2_normalize_rows");
  int n = x.extent(0), m = x.extent(1);
  ArrayXd y = x.array();
  std::vector<double> norms(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto seg = y.segment(static_cast<Eigen::Index>(i) * m, m);
    double nv = std::sqrt(seg.square().sum());
    norms[static_cast<size_t>(i)] = nv;
    if (nv == 0.0) {
      log_warn("l2_normalize_rows: zero-norm row left as zeros");
      continue;
    }
    seg /= nv;
  }
  auto px = x.node();
  auto yc = y;
  return make_op({n, m}, std::move(y), "l2_normalize_rows", {px},
                 [px, yc, norms, n, m](const ArrayXd& g, GradSink& s) {
                   if (!s.wants(px.get())) return;
                   ArrayXd gx(static_cast<Eigen::Index>(n) * m);
                   for (int i = 0; i < n; ++i) {
                     double nv = norms[static_cast<size_t>(i)];
                     auto gi = g.segment(static_cast<Eigen::Index>(i) * m, m);
                     auto yi = yc.segment(static_cast<Eigen::Index>(i) * m, m);
                     auto out = gx.segment(static_cast<Eigen::Index>(i) * m, m);
                     if (nv == 0.0) {
                       out.setZero();
                       continue;
                     }
                     double proj = (gi * yi).sum();
                     out = (gi - proj * yi) / nv;
                   }
                   s.accum(px, gx);
                 });
}

// --- backward ---

void backward(const Tensor& loss) {
  if (!loss.defined()) fail_invalid("backward: undefined tensor");
  if (loss.size() != 1)
    fail_invalid("backward: loss must be scalar, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;  // constant loss: nothing depends on parameters

  // Post-order DFS over the requires-grad subgraph: parents precede consumers.
  std::vector<TensorNode*> order;
  std::unordered_map<TensorNode*, int> state;  // 0 new, 1 open, 2 done
  std::vector<TensorNode*> stack{loss.node().get()};
  while (!stack.empty()) {
    TensorNode* cur = stack.back();
    int st = state[cur];
    if (st == 0) {
      state[cur] = 1;
      for (const auto& p : cur->parents)
        if (p->requires_grad && state[p.get()] == 0) stack.push_back(p.get());
    } else {
      stack.pop_back();
      if (st == 1) {
        state[cur] = 2;
        order.push_back(cur);
      }
    }
  }

  GradSink sink;
  sink.adj_[loss.node().get()] = ArrayXd::Ones(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    auto found = sink.adj_.find(node);
    if (found == sink.adj_.end()) continue;  // no path carried gradient here
    if (node->backprop) {
      node->backprop(found->second, sink);
    } else if (node->requires_grad) {
      if (node->grad.size() == 0) node->grad = ArrayXd::Zero(node->data.size());
      node->grad += found->second;
    }
  }
}

bool all_finite(const Tensor& t) { return t.array().isFinite().all(); }

}  // namespace fssl
