#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "s2p/optim.hpp"
#include "s2p/rng.hpp"
#include "s2p/tensor.hpp"
#include "reference.hpp"

using namespace s2p;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& gen,
                     bool requires_grad = true) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> data(n);
  for (auto& v : data) v = dist(gen);
  return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

}  // namespace

TEST_CASE("matmul forward basics") {
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor v = Tensor::from({2, 1}, {3, 4});
  const Tensor r = matmul(eye, v);
  CHECK(r.at(0) == 3.0f);
  CHECK(r.at(1) == 4.0f);

  const Tensor a = Tensor::from({1, 2}, {1, 2});
  const Tensor b = Tensor::from({2, 1}, {3, 4});
  CHECK(matmul(a, b).item() == 11.0f);

  CHECK_THROWS_AS(matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({3, 1}, {1, 2, 3})),
                  std::invalid_argument);
}

TEST_CASE("matmul gradient matches finite differences") {
  std::mt19937_64 gen(1);
  Tensor a = random_tensor({3, 3}, gen);
  Tensor b = random_tensor({3, 3}, gen);
  const Tensor loss = sum(matmul(a, b));
  loss.backward();

  auto f = [&]() {
    const auto da = ref::to_double(a);
    const auto db = ref::to_double(b);
    const auto c = ref::matmul(da, db, 3, 3, 3);
    double s = 0.0;
    for (double v : c) s += v;
    return s;
  };
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double fd = ref::central_diff(f, a.data()[i]);
    CHECK(ref::rel_err(fd, a.grad()[i]) < 1e-4);
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double fd = ref::central_diff(f, b.data()[i]);
    CHECK(ref::rel_err(fd, b.grad()[i]) < 1e-4);
  }
}

TEST_CASE("softmax forward") {
  const Tensor x = Tensor::from({3}, {0, 0, 0});
  const Tensor y = softmax(x);
  for (int i = 0; i < 3; ++i) CHECK(y.at(i) == doctest::Approx(1.0 / 3).epsilon(1e-6));

  const Tensor big = softmax(Tensor::from({2}, {1000.0f, 0.0f}));
  CHECK(big.at(0) == doctest::Approx(1.0));
  CHECK(big.at(1) == doctest::Approx(0.0));
  CHECK(all_finite(big));
}

TEST_CASE("softmax rows sum to 1 across magnitudes") {
  std::mt19937_64 gen(2);
  for (float mag : {1.0f, 10.0f, 100.0f, 1000.0f}) {
    std::uniform_real_distribution<float> dist(-mag, mag);
    std::vector<float> data(20);
    for (auto& v : data) v = dist(gen);
    const Tensor y = softmax(Tensor::from({4, 5}, data));
    for (int r = 0; r < 4; ++r) {
      double s = 0.0;
      for (int c = 0; c < 5; ++c) {
        const float v = y.at(static_cast<std::size_t>(r) * 5 + c);
        CHECK(v >= 0.0f);  // extreme magnitudes may underflow tail entries
        CHECK(v <= 1.0f);
        s += v;
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("softmax gradient matches finite differences") {
  std::mt19937_64 gen(3);
  Tensor x = random_tensor({5}, gen);
  // weighted sum keeps the test sensitive to every output component
  const Tensor w = Tensor::from({5}, {0.3f, -0.7f, 1.1f, 0.2f, -0.4f});
  sum(mul(softmax(x), w)).backward();

  auto f = [&]() {
    auto d = ref::to_double(x);
    ref::softmax_rows(d, 1, 5);
    double s = 0.0;
    for (int i = 0; i < 5; ++i) s += d[static_cast<std::size_t>(i)] * w.at(static_cast<std::size_t>(i));
    return s;
  };
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(ref::rel_err(ref::central_diff(f, x.data()[i]), x.grad()[i]) < 1e-4);
}

TEST_CASE("layer_norm forward") {
  const Tensor gain = Tensor::from({3}, {1, 1, 1});
  const Tensor bias = Tensor::from({3}, {0, 0, 0});

  const Tensor constant = layer_norm(Tensor::from({3}, {5, 5, 5}), gain, bias);
  for (int i = 0; i < 3; ++i) CHECK(constant.at(i) == doctest::Approx(0.0));

  const Tensor g2 = Tensor::from({2}, {1, 1});
  const Tensor b2 = Tensor::from({2}, {0, 0});
  const Tensor two = layer_norm(Tensor::from({2}, {1, 3}), g2, b2);
  CHECK(two.at(0) == doctest::Approx(-1.0).epsilon(1e-3));
  CHECK(two.at(1) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("layer_norm gradient matches finite differences") {
  std::mt19937_64 gen(4);
  Tensor x = random_tensor({2, 4}, gen);
  Tensor gain = random_tensor({4}, gen);
  Tensor bias = random_tensor({4}, gen);
  const Tensor w = random_tensor({2, 4}, gen, false);
  sum(mul(layer_norm(x, gain, bias), w)).backward();

  auto f = [&]() {
    auto d = ref::to_double(x);
    ref::layer_norm_rows(d, ref::to_double(gain), ref::to_double(bias), 2, 4);
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) s += d[i] * w.at(i);
    return s;
  };
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(ref::rel_err(ref::central_diff(f, x.data()[i]), x.grad()[i]) < 1e-4);
  for (std::size_t i = 0; i < gain.size(); ++i)
    CHECK(ref::rel_err(ref::central_diff(f, gain.data()[i]), gain.grad()[i]) < 1e-4);
  for (std::size_t i = 0; i < bias.size(); ++i)
    CHECK(ref::rel_err(ref::central_diff(f, bias.data()[i]), bias.grad()[i]) < 1e-4);
}

TEST_CASE("activations") {
  CHECK(relu(Tensor::from({2}, {-2, 3})).at(0) == 0.0f);
  CHECK(relu(Tensor::from({2}, {-2, 3})).at(1) == 3.0f);
  CHECK(gelu(Tensor::scalar(0.0f)).item() == 0.0f);

  std::mt19937_64 gen(5);
  Tensor x = random_tensor({6}, gen);
  sum(gelu(x)).backward();
  auto f = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
      s += ref::gelu(static_cast<double>(x.at(i)));
    return s;
  };
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(ref::rel_err(ref::central_diff(f, x.data()[i]), x.grad()[i]) < 1e-4);
}

TEST_CASE("backward on simple graphs") {
  Tensor w = Tensor::from({3}, {1, 2, 3}, true);
  sum(w).backward();
  for (int i = 0; i < 3; ++i) CHECK(w.grad()[static_cast<std::size_t>(i)] == 1.0f);

  Tensor u = Tensor::from({2}, {1, 2}, true);
  sum(mul(u, u)).backward();
  CHECK(u.grad()[0] == 2.0f);
  CHECK(u.grad()[1] == 4.0f);

  CHECK_THROWS_AS(Tensor::from({2}, {1, 2}, true).backward(), std::invalid_argument);
}

TEST_CASE("backward accumulates across calls until reset") {
  Tensor w = Tensor::from({2}, {1, 1}, true);
  const Tensor loss = sum(w);
  loss.backward();
  loss.backward();
  CHECK(w.grad()[0] == 2.0f);
  w.zero_grad();
  loss.backward();
  CHECK(w.grad()[0] == 1.0f);
}

TEST_CASE("adamw basics") {
  AdamWConfig cfg;

  SUBCASE("zero gradient, zero weight decay leaves parameters unchanged") {
    Tensor p = Tensor::from({3}, {1.5f, -2.0f, 0.25f}, true);
    p.grad();  // allocate zeros
    AdamWConfig c = cfg;
    c.weight_decay = 0.0f;
    AdamW opt({p}, c);
    opt.step();
    CHECK(p.at(0) == 1.5f);
    CHECK(p.at(1) == -2.0f);
    CHECK(p.at(2) == 0.25f);
  }

  SUBCASE("positive gradient decreases the parameter") {
    Tensor p = Tensor::scalar(1.0f, true);
    p.grad()[0] = 1.0f;
    AdamW opt({p}, cfg);
    opt.step();
    CHECK(p.item() < 1.0f);
  }

  SUBCASE("lr=0 leaves parameters bit-identical") {
    Tensor p = Tensor::from({2}, {0.123456f, -9.87f}, true);
    p.grad()[0] = 0.5f;
    p.grad()[1] = -0.25f;
    AdamWConfig c = cfg;
    c.lr = 0.0f;
    AdamW opt({p}, c);
    opt.step();
    CHECK(p.at(0) == 0.123456f);
    CHECK(p.at(1) == -9.87f);
  }

  SUBCASE("NaN gradient aborts") {
    Tensor p = Tensor::scalar(1.0f, true);
    p.grad()[0] = std::nanf("");
    AdamW opt({p}, cfg);
    CHECK_THROWS_AS(opt.step(), std::runtime_error);
  }

  SUBCASE("converges on a convex quadratic") {
    Tensor p = Tensor::scalar(0.0f, true);
    AdamWConfig c = cfg;
    c.lr = 0.05f;
    c.weight_decay = 0.0f;
    AdamW opt({p}, c);
    for (int i = 0; i < 200; ++i) {
      opt.zero_grad();
      // d/dp (p-2)^2 = 2(p-2)
      p.grad()[0] = 2.0f * (p.item() - 2.0f);
      opt.step();
    }
    CHECK(std::abs(p.item() - 2.0f) < 0.1f);
  }
}

TEST_CASE("seeded rng reproduces draws and init") {
  RngState a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform(-1, 1) == b.uniform(-1, 1));

  RngState r1(7), r2(7);
  Tensor w1 = Tensor::zeros({4, 4});
  Tensor w2 = Tensor::zeros({4, 4});
  init_linear(w1, 4, r1);
  init_linear(w2, 4, r2);
  for (std::size_t i = 0; i < w1.size(); ++i) CHECK(w1.at(i) == w2.at(i));
}
