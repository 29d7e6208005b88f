#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "poseref/ops.hpp"
#include "poseref/tensor.hpp"

using namespace poseref;

TEST_CASE("tensor construction and element access") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rank() == 2);
  CHECK(t.numel() == 6);
  CHECK(t.at({1, 2}) == 6.0);
  t.at({0, 1}) = 9.0;
  CHECK(t.values()[1] == 9.0);
  CHECK(Tensor::scalar(4.25).item() == 4.25);
  CHECK_THROWS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}));
  CHECK_THROWS((void)t.item());
}

TEST_CASE("relu forward") {
  Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0});
  Tensor y = relu(x);
  CHECK(y.values() == std::vector<double>{0.0, 0.0, 2.0});
}

TEST_CASE("softmax of a constant vector is uniform") {
  for (int n : {1, 4, 9}) {
    Tensor x = Tensor::full({n}, 3.7);
    Tensor y = softmax(x, 0);
    for (double v : y.values()) CHECK(v == doctest::Approx(1.0 / n).epsilon(1e-14));
  }
}

TEST_CASE("softmax rows sum to one and match an exp oracle") {
  Rng rng(5);
  Tensor x = oracle::random_tensor(rng, {4, 6}, -3.0, 3.0);
  Tensor y = softmax(x, 1);
  for (int i = 0; i < 4; ++i) {
    double row_max = -1e300, denom = 0.0, total = 0.0;
    for (int j = 0; j < 6; ++j) row_max = std::max(row_max, x.at({i, j}));
    for (int j = 0; j < 6; ++j) denom += std::exp(x.at({i, j}) - row_max);
    for (int j = 0; j < 6; ++j) {
      const double expect = std::exp(x.at({i, j}) - row_max) / denom;
      CHECK(y.at({i, j}) == doctest::Approx(expect).epsilon(1e-12));
      total += y.at({i, j});
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("matmul and bmm match naive loops") {
  Rng rng(7);
  Tensor a = oracle::random_tensor(rng, {4, 5});
  Tensor b = oracle::random_tensor(rng, {5, 3});
  Tensor c = matmul(a, b);
  const auto expect = oracle::matmul(a.values(), b.values(), 4, 5, 3);
  for (std::size_t i = 0; i < expect.size(); ++i)
    CHECK(c.values()[i] == doctest::Approx(expect[i]).epsilon(1e-12));

  Tensor ba = oracle::random_tensor(rng, {2, 3, 4});
  Tensor bb = oracle::random_tensor(rng, {2, 4, 2});
  Tensor bc = bmm(ba, bb);
  for (int n = 0; n < 2; ++n) {
    std::vector<double> sa(ba.values().begin() + n * 12, ba.values().begin() + (n + 1) * 12);
    std::vector<double> sb(bb.values().begin() + n * 8, bb.values().begin() + (n + 1) * 8);
    const auto se = oracle::matmul(sa, sb, 3, 4, 2);
    for (int i = 0; i < 6; ++i)
      CHECK(bc.values()[n * 6 + i] == doctest::Approx(se[i]).epsilon(1e-12));
  }
  CHECK_THROWS(matmul(a, a));
}

TEST_CASE("broadcasting follows trailing-dimension alignment") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({3}, {10, 20, 30});
  Tensor c = add(a, b);
  CHECK(c.values() == std::vector<double>{11, 22, 33, 14, 25, 36});

  Tensor col = Tensor::from({2, 1}, {100, 200});
  Tensor d = add(a, col);
  CHECK(d.values() == std::vector<double>{101, 102, 103, 204, 205, 206});

  CHECK_THROWS(add(Tensor::from({2}, {1, 2}), Tensor::from({3}, {1, 2, 3})));
}

TEST_CASE("backward of a plain sum is all ones") {
  Tensor x = Tensor::from({3}, {5, -2, 7}).set_requires_grad(true);
  sum(x).backward();
  CHECK(x.grad() == std::vector<double>{1, 1, 1});
}

TEST_CASE("backward of half the squared norm returns the input") {
  Tensor x = Tensor::from({4}, {0.5, -1.5, 2.0, 3.25}).set_requires_grad(true);
  mul(sum(square(x)), 0.5).backward();
  for (int i = 0; i < 4; ++i)
    CHECK(x.grad()[i] == doctest::Approx(x.values()[i]).epsilon(1e-14));
}

TEST_CASE("repeated backward accumulates into leaf gradients") {
  Tensor x = Tensor::from({2}, {1.0, 2.0}).set_requires_grad(true);
  Tensor loss = sum(mul(x, 3.0));
  loss.backward();
  loss.backward();
  CHECK(x.grad() == std::vector<double>{6.0, 6.0});
  x.zero_grad();
  loss.backward();
  CHECK(x.grad() == std::vector<double>{3.0, 3.0});
}

TEST_CASE("backward is linear across summed losses") {
  Rng rng(21);
  Tensor x1 = oracle::random_tensor(rng, {3, 3});
  Tensor x2 = x1.detach();
  Tensor x3 = x1.detach();
  x1.set_requires_grad(true);
  x2.set_requires_grad(true);
  x3.set_requires_grad(true);

  auto loss_a = [](const Tensor& t) { return sum(square(t)); };
  auto loss_b = [](const Tensor& t) { return sum(relu(t)); };
  add(loss_a(x1), loss_b(x1)).backward();
  loss_a(x2).backward();
  loss_b(x3).backward();
  for (std::size_t i = 0; i < x1.numel(); ++i)
    CHECK(x1.grad()[i] ==
          doctest::Approx(x2.grad()[i] + x3.grad()[i]).epsilon(1e-13));
}

TEST_CASE("reshape permute narrow move values as documented") {
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = reshape(x, {3, 2});
  CHECK(r.values() == x.values());
  CHECK_THROWS(reshape(x, {4, 2}));

  Tensor p = permute(x, {1, 0});
  CHECK(p.shape() == Shape{3, 2});
  CHECK(p.values() == std::vector<double>{1, 4, 2, 5, 3, 6});

  Tensor n = narrow(x, 1, 1, 2);
  CHECK(n.shape() == Shape{2, 2});
  CHECK(n.values() == std::vector<double>{2, 3, 5, 6});
  CHECK_THROWS(narrow(x, 1, 2, 2));
}

TEST_CASE("sum and mean reduce requested axes") {
  Tensor x = Tensor::from({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor s = sum(x, {0, 2});
  CHECK(s.shape() == Shape{2});
  CHECK(s.values() == std::vector<double>{1 + 2 + 5 + 6, 3 + 4 + 7 + 8});
  Tensor k = sum(x, {1}, true);
  CHECK(k.shape() == Shape{2, 1, 2});
  CHECK(mean(x).item() == doctest::Approx(4.5));
  CHECK(mean(x, {2}).values() ==
        std::vector<double>{1.5, 3.5, 5.5, 7.5});
}

TEST_CASE("temporal conv with k_t=1 identity kernel returns its input") {
  Rng rng(11);
  Tensor x = oracle::random_tensor(rng, {2, 3, 4, 5});
  Tensor kernel = Tensor::zeros({3, 3, 1});
  for (int c = 0; c < 3; ++c) kernel.at({c, c, 0}) = 1.0;
  Tensor y = temporal_conv(x, kernel);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i)
    CHECK(y.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-14));
}

TEST_CASE("temporal conv matches a direct sliding-window loop") {
  Rng rng(13);
  const int N = 2, C = 3, T = 6, V = 2, CO = 4, K = 3;
  Tensor x = oracle::random_tensor(rng, {N, C, T, V});
  Tensor w = oracle::random_tensor(rng, {CO, C, K});
  Tensor y = temporal_conv(x, w);
  const int pad = (K - 1) / 2;
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < CO; ++co)
      for (int t = 0; t < T; ++t)
        for (int v = 0; v < V; ++v) {
          double s = 0.0;
          for (int ci = 0; ci < C; ++ci)
            for (int k = 0; k < K; ++k) {
              const int tt = t + k - pad;
              if (tt < 0 || tt >= T) continue;
              s += x.at({n, ci, tt, v}) * w.at({co, ci, k});
            }
          CHECK(y.at({n, co, t, v}) == doctest::Approx(s).epsilon(1e-12));
        }
}

TEST_CASE("batch norm training mode standardizes per channel") {
  Rng rng(17);
  Tensor x = oracle::random_tensor(rng, {4, 3, 5}, -2.0, 5.0);
  Tensor gamma = Tensor::full({3}, 1.0);
  Tensor beta = Tensor::zeros({3});
  BatchNormStats stats{{0, 0, 0}, {1, 1, 1}};
  Tensor y = batch_norm(x, gamma, beta, stats, true);
  for (int c = 0; c < 3; ++c) {
    double m = 0.0, v = 0.0;
    int count = 0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 5; ++i) {
        m += y.at({n, c, i});
        ++count;
      }
    m /= count;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 5; ++i) v += (y.at({n, c, i}) - m) * (y.at({n, c, i}) - m);
    v /= count;
    CHECK(m == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(v == doctest::Approx(1.0).epsilon(1e-3));  // eps in the denominator
    // Running stats moved toward the batch statistics with momentum 0.1.
    CHECK(stats.mean[c] != 0.0);
    CHECK(stats.var[c] != 1.0);
  }
}

TEST_CASE("batch norm inference mode is a frozen affine map") {
  Tensor x = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
  Tensor gamma = Tensor::from({2}, {2.0, 0.5});
  Tensor beta = Tensor::from({2}, {1.0, -1.0});
  BatchNormStats stats{{1.0, 2.0}, {4.0, 9.0}};
  const BatchNormStats before = stats;
  Tensor y1 = batch_norm(x, gamma, beta, stats, false);
  Tensor y2 = batch_norm(x, gamma, beta, stats, false);
  CHECK(stats.mean == before.mean);  // inference never touches running stats
  CHECK(stats.var == before.var);
  for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(y1.values()[i] == y2.values()[i]);
  const double eps = 1e-5;
  CHECK(y1.at({0, 0, 0}) ==
        doctest::Approx(2.0 * (1.0 - 1.0) / std::sqrt(4.0 + eps) + 1.0).epsilon(1e-12));
  CHECK(y1.at({0, 1, 1}) ==
        doctest::Approx(0.5 * (4.0 - 2.0) / std::sqrt(9.0 + eps) - 1.0).epsilon(1e-12));
}

TEST_CASE("gradient checks per op") {
  Rng rng(23);
  auto check = [&](const char* name, auto f, std::vector<Tensor> inputs) {
    const double err = oracle::fd_max_rel_err(f, std::move(inputs));
    INFO(name);
    CHECK(err < 1e-5);
  };

  check("add broadcast",
        [](const std::vector<Tensor>& in) { return add(in[0], in[1]); },
        {oracle::random_tensor(rng, {2, 3, 4}), oracle::random_tensor(rng, {3, 1})});
  check("sub", [](const std::vector<Tensor>& in) { return sub(in[0], in[1]); },
        {oracle::random_tensor(rng, {3, 3}), oracle::random_tensor(rng, {3})});
  check("mul broadcast",
        [](const std::vector<Tensor>& in) { return mul(in[0], in[1]); },
        {oracle::random_tensor(rng, {2, 3}), oracle::random_tensor(rng, {2, 1})});
  check("div", [](const std::vector<Tensor>& in) { return div(in[0], in[1]); },
        {oracle::random_tensor(rng, {2, 4}),
         oracle::random_tensor(rng, {2, 4}, 0.5, 2.0)});
  check("matmul",
        [](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); },
        {oracle::random_tensor(rng, {4, 5}), oracle::random_tensor(rng, {5, 3})});
  check("bmm", [](const std::vector<Tensor>& in) { return bmm(in[0], in[1]); },
        {oracle::random_tensor(rng, {2, 3, 4}), oracle::random_tensor(rng, {2, 4, 2})});
  check("relu", [](const std::vector<Tensor>& in) { return relu(in[0]); },
        {oracle::random_tensor(rng, {3, 4}, 0.2, 2.0)});
  check("relu negative side",
        [](const std::vector<Tensor>& in) { return relu(in[0]); },
        {oracle::random_tensor(rng, {3, 4}, -2.0, -0.2)});
  check("abs", [](const std::vector<Tensor>& in) { return abs(in[0]); },
        {oracle::random_tensor(rng, {5}, 0.3, 2.0)});
  check("sqrt", [](const std::vector<Tensor>& in) { return sqrt(in[0]); },
        {oracle::random_tensor(rng, {4}, 0.5, 3.0)});
  check("square", [](const std::vector<Tensor>& in) { return square(in[0]); },
        {oracle::random_tensor(rng, {4, 2})});
  check("softmax", [](const std::vector<Tensor>& in) { return softmax(in[0], 1); },
        {oracle::random_tensor(rng, {3, 5}, -2.0, 2.0)});
  check("sum axes",
        [](const std::vector<Tensor>& in) { return sum(in[0], {0, 2}, false); },
        {oracle::random_tensor(rng, {2, 3, 4})});
  check("mean keepdims",
        [](const std::vector<Tensor>& in) { return mean(in[0], {1}, true); },
        {oracle::random_tensor(rng, {3, 4})});
  check("reshape",
        [](const std::vector<Tensor>& in) { return reshape(in[0], {6, 2}); },
        {oracle::random_tensor(rng, {3, 4})});
  check("permute",
        [](const std::vector<Tensor>& in) { return permute(in[0], {2, 0, 1}); },
        {oracle::random_tensor(rng, {2, 3, 4})});
  check("narrow",
        [](const std::vector<Tensor>& in) { return narrow(in[0], 1, 1, 2); },
        {oracle::random_tensor(rng, {3, 4})});
  check("temporal_conv",
        [](const std::vector<Tensor>& in) { return temporal_conv(in[0], in[1]); },
        {oracle::random_tensor(rng, {2, 3, 5, 2}), oracle::random_tensor(rng, {4, 3, 3})});
  check("batch_norm training",
        [](const std::vector<Tensor>& in) {
          BatchNormStats stats{{0.0, 0.0}, {1.0, 1.0}};
          return batch_norm(in[0], in[1], in[2], stats, true);
        },
        {oracle::random_tensor(rng, {3, 2, 4}), oracle::random_tensor(rng, {2}, 0.5, 1.5),
         oracle::random_tensor(rng, {2})});
  check("batch_norm inference",
        [](const std::vector<Tensor>& in) {
          BatchNormStats stats{{0.1, -0.2}, {1.3, 0.8}};
          return batch_norm(in[0], in[1], in[2], stats, false);
        },
        {oracle::random_tensor(rng, {3, 2, 4}), oracle::random_tensor(rng, {2}, 0.5, 1.5),
         oracle::random_tensor(rng, {2})});
}

TEST_CASE("no-grad guard suspends recording") {
  Tensor x = Tensor::from({2}, {1, 2}).set_requires_grad(true);
  {
    NoGradGuard guard;
    Tensor y = mul(x, 2.0);
    CHECK_FALSE(y.tracked());
  }
  Tensor y = mul(x, 2.0);
  CHECK(y.tracked());
}

TEST_CASE("checked mode rejects non-finite values") {
  set_checked_mode(true);
  Tensor bad = Tensor::from({2}, {1.0, std::nan("")});
  CHECK_THROWS(add(bad, 1.0));
  set_checked_mode(false);
  CHECK_NOTHROW(add(bad, 1.0));
}

TEST_CASE("backward requires a scalar") {
  Tensor x = Tensor::from({2}, {1, 2}).set_requires_grad(true);
  Tensor y = mul(x, 2.0);
  CHECK_THROWS(y.backward());
}
