#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "fssl/checkpoint.hpp"
#include "fssl/params.hpp"
#include "fssl/tensor.hpp"
#include "testutil.hpp"

using namespace fssl;
using fssl::test::approx;
using fssl::test::check_gradient;
using fssl::test::random_tensor;

namespace {

// Reference convolution: direct nested loops, independent of the im2col path.
Tensor conv2d_reference(const Tensor& x, const Tensor& k, int stride, int pad) {
  int n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  int co = k.extent(0), kh = k.extent(2), kw = k.extent(3);
  int ho = (h + 2 * pad - kh) / stride + 1;
  int wo = (w + 2 * pad - kw) / stride + 1;
  Eigen::ArrayXd y(static_cast<Eigen::Index>(n) * co * ho * wo);
  for (int nn = 0; nn < n; ++nn)
    for (int oc = 0; oc < co; ++oc)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          double acc = 0.0;
          for (int ic = 0; ic < c; ++ic)
            for (int a = 0; a < kh; ++a)
              for (int b = 0; b < kw; ++b) {
                int hh = i * stride - pad + a, ww = j * stride - pad + b;
                if (hh < 0 || hh >= h || ww < 0 || ww >= w) continue;
                acc += x.at({nn, ic, hh, ww}) * k.at({oc, ic, a, b});
              }
          y[((static_cast<Eigen::Index>(nn) * co + oc) * ho + i) * wo + j] = acc;
        }
  return Tensor::from_array({n, co, ho, wo}, std::move(y));
}

}  // namespace

TEST_CASE("conv2d identity kernel") {
  Rng rng(7);
  Tensor x = random_tensor({1, 1, 3, 3}, rng);
  Tensor k = Tensor::constant({1, 1, 1, 1}, 1.0);
  Tensor y = conv2d(x, k, 1, 0);
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  for (Eigen::Index i = 0; i < y.size(); ++i) CHECK(y.array()[i] == x.array()[i]);
}

TEST_CASE("conv2d hand sum") {
  Tensor x = Tensor::from_values({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor k = Tensor::from_values({1, 1, 2, 2}, {1, 0, 0, 1});
  Tensor y = conv2d(x, k, 1, 0);
  REQUIRE(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.value() == doctest::Approx(5.0));
}

TEST_CASE("conv2d matches loop reference") {
  Rng rng(11);
  Tensor x = random_tensor({2, 3, 8, 8}, rng);
  Tensor k = random_tensor({4, 3, 3, 3}, rng);
  for (auto [stride, pad] : std::vector<std::pair<int, int>>{{1, 0}, {1, 1}, {2, 1}}) {
    Tensor y = conv2d(x, k, stride, pad);
    Tensor ref = conv2d_reference(x, k, stride, pad);
    REQUIRE(y.shape() == ref.shape());
    for (Eigen::Index i = 0; i < y.size(); ++i)
      CHECK(y.array()[i] == doctest::Approx(ref.array()[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d rejects mismatched shapes with both shapes named") {
  Tensor x = Tensor::zeros({1, 2, 4, 4});
  Tensor k = Tensor::zeros({1, 3, 3, 3});
  try {
    conv2d(x, k, 1, 0);
    FAIL("expected exception");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("[1x2x4x4]") != std::string::npos);
    CHECK(msg.find("[1x3x3x3]") != std::string::npos);
  }
}

TEST_CASE("avg_pool2d basics") {
  Tensor c = Tensor::constant({1, 1, 4, 4}, 3.25);
  Tensor pooled = avg_pool2d(c, 2);
  for (Eigen::Index i = 0; i < pooled.size(); ++i) CHECK(pooled.array()[i] == 3.25);

  Tensor x = Tensor::from_values({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(avg_pool2d(x, 2).value() == doctest::Approx(2.5));

  Rng rng(3);
  Tensor r = random_tensor({1, 2, 4, 4}, rng);
  Tensor y = avg_pool2d(r, 2);
  for (int c2 = 0; c2 < 2; ++c2)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        double acc = 0.0;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) acc += r.at({0, c2, 2 * i + a, 2 * j + b});
        CHECK(y.at({0, c2, i, j}) == doctest::Approx(acc / 4.0));
      }

  CHECK_THROWS_AS(avg_pool2d(Tensor::zeros({1, 1, 5, 5}), 2), std::invalid_argument);
}

TEST_CASE("cosine_similarity values") {
  Tensor a = Tensor::from_values({3}, {1, 2, 3});
  CHECK(cosine_similarity(a, a).value() == doctest::Approx(1.0));
  Tensor e1 = Tensor::from_values({2}, {1, 0});
  Tensor e2 = Tensor::from_values({2}, {0, 1});
  CHECK(cosine_similarity(e1, e2).value() == doctest::Approx(0.0));
  Tensor u = Tensor::from_values({2}, {1, 2});
  Tensor v = Tensor::from_values({2}, {2, 1});
  CHECK(cosine_similarity(u, v).value() == doctest::Approx(0.8));
  Tensor z = Tensor::zeros({2});
  CHECK(cosine_similarity(z, u).value() == 0.0);
}

TEST_CASE("sigmoid, concat, mlp identity") {
  CHECK(sigmoid(Tensor::scalar(0.0)).value() == doctest::Approx(0.5));

  Tensor a = Tensor::from_values({2}, {1, 2});
  Tensor b = Tensor::from_values({1}, {3});
  Tensor cat = concat(a, b);
  REQUIRE(cat.shape() == Shape{3});
  CHECK(cat.array()[0] == 1.0);
  CHECK(cat.array()[1] == 2.0);
  CHECK(cat.array()[2] == 3.0);

  ParamMap mlp;
  mlp["fc0.w"] = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  mlp["fc0.b"] = Tensor::zeros({2});
  Tensor out = mlp_forward(a, mlp);
  REQUIRE(out.shape() == Shape{2});
  CHECK(out.array()[0] == doctest::Approx(1.0));
  CHECK(out.array()[1] == doctest::Approx(2.0));
}

TEST_CASE("backward on p^2 and sgd step") {
  Tensor p = Tensor::scalar(3.0, true);
  Tensor loss = mul(p, p);
  backward(loss);
  CHECK(p.grad()[0] == doctest::Approx(6.0));
  ParamMap params{{"p", p}};
  OptimizerConfig cfg;
  cfg.learning_rate = 0.1;
  ParamMap next = sgd_step(params, cfg);
  CHECK(next["p"].value() == doctest::Approx(2.4));
}

TEST_CASE("backward with loss independent of parameter") {
  Tensor p = Tensor::scalar(5.0, true);
  Tensor q = Tensor::scalar(2.0, true);
  backward(mul(q, q));
  CHECK_FALSE(p.has_grad());
  ParamMap params{{"p", p}};
  OptimizerConfig cfg;
  ParamMap next = sgd_step(params, cfg);
  CHECK(next["p"].value() == 5.0);
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor v = Tensor::from_values({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(v), std::invalid_argument);
}

TEST_CASE("backward accumulates and is linear") {
  Rng rng(5);
  Tensor pa = random_tensor({4}, rng);

  auto grad_of = [&](auto builder) {
    Tensor leaf = Tensor::from_array(pa.shape(), pa.array(), true);
    backward(builder(leaf));
    return leaf.grad();
  };
  auto la = [](const Tensor& t) { return sum(mul(t, t)); };
  auto lb = [](const Tensor& t) { return mean(relu(t)); };
  auto lsum = [&](const Tensor& t) { return add(sum(mul(t, t)), mean(relu(t))); };

  Eigen::ArrayXd ga = grad_of(la), gb = grad_of(lb), gs = grad_of(lsum);
  for (Eigen::Index i = 0; i < pa.size(); ++i)
    CHECK(gs[i] == doctest::Approx(ga[i] + gb[i]).epsilon(1e-12));

  // Two backward calls on separately built graphs accumulate on the leaf.
  Tensor leaf = Tensor::from_array(pa.shape(), pa.array(), true);
  backward(la(leaf));
  backward(la(leaf));
  for (Eigen::Index i = 0; i < pa.size(); ++i)
    CHECK(leaf.grad()[i] == doctest::Approx(2.0 * ga[i]).epsilon(1e-12));
}

TEST_CASE("sgd momentum hand check") {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.9;
  SgdOptimizer opt(cfg);
  // Loss p^2/2 so grad == p; two steps by hand:
  // v1 = 3, p1 = 3 - 0.3 = 2.7 ; v2 = 0.9*3 + 2.7 = 5.4, p2 = 2.7 - 0.54 = 2.16
  ParamMap p{{"p", Tensor::scalar(3.0, true)}};
  auto step = [&](ParamMap cur) {
    Tensor loss = scale(mul(cur["p"], cur["p"]), 0.5);
    backward(loss);
    return opt.step(cur);
  };
  ParamMap p1 = step(p);
  CHECK(p1["p"].value() == doctest::Approx(2.7));
  ParamMap p2 = step(p1);
  CHECK(p2["p"].value() == doctest::Approx(2.16));
}

TEST_CASE("finite differences across ops") {
  const int kSeeds = 5;
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(1000 + static_cast<uint64_t>(seed));
    Tensor w1 = random_tensor({2, 3}, rng);
    Tensor w2 = random_tensor({3, 2}, rng);
    Tensor x4 = random_tensor({1, 2, 4, 4}, rng);
    Tensor k4 = random_tensor({2, 2, 3, 3}, rng);
    Tensor wconv = random_tensor({1, 2, 4, 4}, rng);
    Tensor vec = random_tensor({4}, rng, 0.3, 1.5);
    Tensor other = random_tensor({4}, rng, -1.0, 1.0);

    auto fd = [&](const char* name, const Tensor& at, auto builder) {
      auto r = check_gradient(builder, at);
      std::string msg = std::string(name) + " max rel err " + std::to_string(r.max_rel_err);
      CHECK_MESSAGE(r.ok, msg);
    };

    fd("add", w1, [&](const Tensor& t) { return sum(add(t, scale(w1, 0.5))); });
    fd("sub", w1, [&](const Tensor& t) { return sum(sub(scale(w1, 0.5), t)); });
    fd("mul", w1, [&](const Tensor& t) { return sum(mul(t, w1)); });
    fd("scale", w1, [&](const Tensor& t) { return mean(scale(t, -2.5)); });
    fd("relu", w1, [&](const Tensor& t) { return sum(relu(t)); });
    fd("sigmoid", w1, [&](const Tensor& t) { return sum(sigmoid(t)); });
    fd("exp", w1, [&](const Tensor& t) { return sum(exp(t)); });
    fd("log", vec, [&](const Tensor& t) { return sum(log(t)); });
    fd("reshape", w1, [&](const Tensor& t) { return sum(mul(reshape(t, {3, 2}), w2)); });
    fd("concat", vec, [&](const Tensor& t) { return sum(mul(concat(t, other), concat(other, t))); });
    fd("row", w1, [&](const Tensor& t) { return sum(mul(row(t, 1), row(w1, 0))); });
    fd("transpose", w1, [&](const Tensor& t) { return sum(mul(transpose(t), w2)); });
    fd("sum", w1, [&](const Tensor& t) { return sum(t); });
    fd("mean", w1, [&](const Tensor& t) { return mean(t); });
    fd("row_sums", w1, [&](const Tensor& t) { return sum(mul(row_sums(t), row(w2, 0))); });
    fd("col_means", w1, [&](const Tensor& t) { return sum(mul(col_means(t), row(w1, 0))); });
    fd("select_cols", w1,
       [&](const Tensor& t) { return sum(select_cols(t, {2, 0})); });
    fd("matmul lhs", w1, [&](const Tensor& t) { return sum(matmul(t, w2)); });
    fd("matmul rhs", w2, [&](const Tensor& t) { return sum(matmul(w1, t)); });
    Tensor bias3 = random_tensor({3}, rng);
    fd("add_row_bias x", w1,
       [&](const Tensor& t) { return sum(mul(add_row_bias(t, bias3), w1)); });
    Tensor x34 = random_tensor({3, 4}, rng);
    fd("add_row_bias b", vec,
       [&](const Tensor& t) { return sum(mul(add_row_bias(x34, t), x34)); });
    fd("add_channel_bias", x4, [&](const Tensor& t) {
      return sum(mul(add_channel_bias(t, Tensor::from_values({2}, {0.3, -0.7})), wconv));
    });
    fd("conv2d input", x4,
       [&](const Tensor& t) { return sum(mul(conv2d(t, k4, 1, 1), wconv)); });
    fd("conv2d kernel", k4,
       [&](const Tensor& t) { return sum(mul(conv2d(x4, t, 1, 1), wconv)); });
    Tensor wpool = random_tensor({1, 2, 2, 2}, rng);
    fd("avg_pool2d", x4,
       [&](const Tensor& t) { return sum(mul(avg_pool2d(t, 2), wpool)); });
    fd("cosine a", vec, [&](const Tensor& t) { return cosine_similarity(t, other); });
    fd("cosine b", other, [&](const Tensor& t) { return cosine_similarity(vec, t); });
    fd("l2_normalize_rows", w1,
       [&](const Tensor& t) { return sum(mul(l2_normalize_rows(t), w1)); });
  }
}

TEST_CASE("finite values after forward/backward on finite inputs") {
  Rng rng(21);
  Tensor x = random_tensor({2, 2, 4, 4}, rng);
  Tensor k = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
  Tensor kg = Tensor::from_array(k.shape(), k.array(), true);
  Tensor y = relu(conv2d(x, kg, 1, 1));
  Tensor z = l2_normalize_rows(reshape(y, {2, 3 * 16}));
  Tensor loss = mean(sigmoid(z));
  CHECK(all_finite(y));
  CHECK(all_finite(loss));
  backward(loss);
  CHECK(kg.grad().isFinite().all());
}

TEST_CASE("deterministic trajectories with identical seeds") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tensor w = Tensor::uniform({4, 4}, rng, -1.0, 1.0, true);
    ParamMap p{{"w", w}};
    Tensor data = Tensor::uniform({4, 4}, rng, -1.0, 1.0);
    OptimizerConfig cfg;
    cfg.learning_rate = 0.05;
    for (int i = 0; i < 10; ++i) {
      Tensor loss = mean(mul(sub(matmul(p["w"], data), data), sub(matmul(p["w"], data), data)));
      backward(loss);
      p = sgd_step(p, cfg);
    }
    return p["w"].array();
  };
  Eigen::ArrayXd a = run(42), b = run(42), c = run(43);
  bool identical = true;
  for (Eigen::Index i = 0; i < a.size(); ++i) identical = identical && (a[i] == b[i]);
  CHECK(identical);
  bool differs = false;
  for (Eigen::Index i = 0; i < a.size(); ++i) differs = differs || (a[i] != c[i]);
  CHECK(differs);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  Rng rng(9);
  ParamMap p;
  p["conv0.w"] = random_tensor({4, 3, 3, 3}, rng);
  p["conv0.b"] = random_tensor({4}, rng);
  p["embed.w"] = random_tensor({16, 8}, rng);
  std::string path = (std::filesystem::temp_directory_path() / "fssl_ckpt_test.bin").string();
  save_params(path, p);
  ParamMap q = load_params(path);
  REQUIRE(same_schema(p, q));
  for (const auto& [name, t] : p) {
    const auto& u = q.at(name);
    for (Eigen::Index i = 0; i < t.size(); ++i) CHECK(t.array()[i] == u.array()[i]);
  }
  std::filesystem::remove(path);
}

TEST_CASE("params arithmetic") {
  Rng rng(13);
  ParamMap a{{"w", random_tensor({3}, rng)}, {"b", random_tensor({2}, rng)}};
  ParamMap b{{"w", random_tensor({3}, rng)}, {"b", random_tensor({2}, rng)}};
  ParamMap mid = params_scale(params_add(a, b), 0.5);
  std::vector<ParamMap> models{a, b};
  ParamMap avg = params_mean(models);
  for (const auto& [name, t] : mid)
    for (Eigen::Index i = 0; i < t.size(); ++i)
      CHECK(t.array()[i] == doctest::Approx(avg.at(name).array()[i]).epsilon(1e-15));

  ParamMap d = params_sub(b, a);
  ParamMap back = params_axpy(a, 1.0, d);
  for (const auto& [name, t] : back)
    for (Eigen::Index i = 0; i < t.size(); ++i)
      CHECK(t.array()[i] == doctest::Approx(b.at(name).array()[i]).epsilon(1e-15));

  ParamMap bad{{"w", random_tensor({4}, rng)}};
  CHECK_THROWS_AS(params_add(a, bad), std::invalid_argument);
}
