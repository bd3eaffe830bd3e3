#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "reference.hpp"
#include "s2p/teacher.hpp"

using namespace s2p;

namespace {

TeacherConfig tiny_config() {
  TeacherConfig cfg;
  cfg.L = 4;
  cfg.H = 3;
  cfg.d_u = 7;
  cfg.d_m = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  return cfg;
}

Window random_window(int L, int H, int d_x, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  Window w;
  w.history_len = L;
  w.horizon = H;
  w.feature_dim = d_x;
  w.history_load.resize(static_cast<std::size_t>(L));
  for (auto& v : w.history_load) v = dist(gen);
  w.history_feat.resize(static_cast<std::size_t>(L) * d_x);
  for (auto& v : w.history_feat) v = dist(gen);
  w.anchor = w.history_load.back();
  w.future_load.resize(static_cast<std::size_t>(H));
  for (auto& v : w.future_load) v = dist(gen);
  return w;
}

}  // namespace

TEST_CASE("build_tokens layout") {
  const Window w = random_window(4, 2, 6, 1);
  const Tensor tok = build_tokens(w);
  CHECK(tok.shape() == std::vector<int>{4, 7});
  // last token's load slot is the anchor
  CHECK(tok.at(3 * 7) == w.anchor);
  for (int f = 0; f < 6; ++f) CHECK(tok.at(static_cast<std::size_t>(2 * 7 + 1 + f)) == w.feat(2, f));
}

TEST_CASE("embed adds positions") {
  auto cfg = tiny_config();
  RngState rng(3);
  TeacherModel m = TeacherModel::init(cfg, rng);

  SUBCASE("zero tokens and zero bias give the positional table") {
    const Tensor zeros = Tensor::zeros({cfg.L, cfg.d_u});
    const Tensor h0 = embed(m, zeros);
    for (std::size_t i = 0; i < h0.size(); ++i)
      CHECK(h0.at(i) == m.positional.at(i));
  }

  SUBCASE("identical tokens at two positions differ by the positional delta") {
    std::vector<float> data(static_cast<std::size_t>(cfg.L) * cfg.d_u);
    for (int s = 0; s < cfg.L; ++s)
      for (int j = 0; j < cfg.d_u; ++j)
        data[static_cast<std::size_t>(s) * cfg.d_u + j] = 0.1f * (j + 1);
    const Tensor h0 = embed(m, Tensor::from({cfg.L, cfg.d_u}, data));
    for (int j = 0; j < cfg.d_m; ++j) {
      const float delta = h0.at(static_cast<std::size_t>(cfg.d_m + j)) - h0.at(static_cast<std::size_t>(j));
      const float pos_delta = m.positional.at(static_cast<std::size_t>(cfg.d_m + j)) -
                              m.positional.at(static_cast<std::size_t>(j));
      CHECK(delta == doctest::Approx(pos_delta).epsilon(1e-5));
    }
  }

  SUBCASE("default config produces [360, 64] embeddings") {
    TeacherConfig dflt;
    RngState r(0);
    TeacherModel big = TeacherModel::init(dflt, r);
    const Tensor h0 = embed(big, Tensor::zeros({dflt.L, dflt.d_u}));
    CHECK(h0.shape() == std::vector<int>{360, 64});
  }
}

TEST_CASE("attention pooling properties") {
  auto cfg = tiny_config();
  RngState rng(4);
  TeacherModel m = TeacherModel::init(cfg, rng);

  SUBCASE("identical tokens give uniform weights and the shared state") {
    std::vector<float> data(static_cast<std::size_t>(cfg.L) * cfg.d_m);
    for (int s = 0; s < cfg.L; ++s)
      for (int j = 0; j < cfg.d_m; ++j)
        data[static_cast<std::size_t>(s) * cfg.d_m + j] = 0.3f * (j + 1);
    auto [c, alpha] = attention_pool(m, Tensor::from({cfg.L, cfg.d_m}, data));
    for (int s = 0; s < cfg.L; ++s)
      CHECK(alpha.at(static_cast<std::size_t>(s)) == doctest::Approx(1.0 / cfg.L).epsilon(1e-6));
    for (int j = 0; j < cfg.d_m; ++j)
      CHECK(c.at(static_cast<std::size_t>(j)) == doctest::Approx(0.3 * (j + 1)).epsilon(1e-5));
  }

  SUBCASE("zero pooling vector gives uniform weights") {
    for (std::size_t i = 0; i < m.w_pool.size(); ++i) m.w_pool.at(i) = 0.0f;
    const Window w = random_window(cfg.L, cfg.H, cfg.d_u - 1, 5);
    const auto f = predict_trajectory(m, w);
    for (int s = 0; s < cfg.L; ++s)
      CHECK(f.alpha.at(static_cast<std::size_t>(s)) == doctest::Approx(1.0 / cfg.L).epsilon(1e-6));
  }

  SUBCASE("a +20 score margin saturates its weight") {
    // one token state aligned with w_pool, others orthogonal
    for (std::size_t i = 0; i < m.w_pool.size(); ++i) m.w_pool.at(i) = 0.0f;
    m.w_pool.at(0) = 1.0f;
    std::vector<float> data(static_cast<std::size_t>(cfg.L) * cfg.d_m, 0.0f);
    data[static_cast<std::size_t>(2) * cfg.d_m] = 20.0f;
    auto [c, alpha] = attention_pool(m, Tensor::from({cfg.L, cfg.d_m}, data));
    CHECK(alpha.at(2) > 0.999f);
  }

  SUBCASE("weights always form a distribution") {
    const Window w = random_window(cfg.L, cfg.H, cfg.d_u - 1, 6);
    const auto f = predict_trajectory(m, w);
    double s = 0.0;
    for (int i = 0; i < cfg.L; ++i) {
      CHECK(f.alpha.at(static_cast<std::size_t>(i)) >= 0.0f);
      s += f.alpha.at(static_cast<std::size_t>(i));
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("encoder attention rows are normalized and L=1 self-attends") {
  auto cfg = tiny_config();
  RngState rng(7);
  TeacherModel m = TeacherModel::init(cfg, rng);

  // Row normalization is intrinsic to softmax; check through a degenerate
  // L=1 encoder where attention must reduce to identity mixing of V.
  TeacherConfig one = cfg;
  one.L = 1;
  RngState rng1(7);
  TeacherModel m1 = TeacherModel::init(one, rng1);
  const Window w = random_window(1, one.H, one.d_u - 1, 8);
  const auto f = predict_trajectory(m1, w);
  CHECK(f.alpha.at(0) == doctest::Approx(1.0));
  CHECK(all_finite(f.residuals));
}

TEST_CASE("encoder matches the straight-line oracle") {
  auto cfg = tiny_config();
  RngState rng(9);
  TeacherModel m = TeacherModel::init(cfg, rng);
  const Window w = random_window(cfg.L, cfg.H, cfg.d_u - 1, 10);

  const auto got = predict_trajectory(m, w);
  const auto want = ref::teacher_forward(m, w);

  for (int h = 0; h < cfg.H; ++h)
    CHECK(std::abs(got.residuals.at(static_cast<std::size_t>(h)) -
                   want.residuals[static_cast<std::size_t>(h)]) < 1e-5);
  for (int j = 0; j < cfg.d_m; ++j)
    CHECK(std::abs(got.context.at(static_cast<std::size_t>(j)) -
                   want.context[static_cast<std::size_t>(j)]) < 1e-5);
  for (int s = 0; s < cfg.L; ++s)
    CHECK(std::abs(got.alpha.at(static_cast<std::size_t>(s)) -
                   want.alpha[static_cast<std::size_t>(s)]) < 1e-5);
}

TEST_CASE("residual anchoring and trajectory shapes") {
  auto cfg = tiny_config();
  RngState rng(11);
  TeacherModel m = TeacherModel::init(cfg, rng);
  const Window w = random_window(cfg.L, cfg.H, cfg.d_u - 1, 12);

  SUBCASE("zeroed head forecasts the anchor everywhere") {
    for (std::size_t i = 0; i < m.w_out.size(); ++i) m.w_out.at(i) = 0.0f;
    for (std::size_t i = 0; i < m.b_out.size(); ++i) m.b_out.at(i) = 0.0f;
    const auto f = predict_trajectory(m, w);
    for (float p : f.absolute) CHECK(p == w.anchor);
  }

  SUBCASE("absolute minus anchor equals residuals exactly") {
    const auto f = predict_trajectory(m, w);
    for (int h = 0; h < cfg.H; ++h)
      CHECK(f.absolute[static_cast<std::size_t>(h)] ==
            w.anchor + f.residuals.at(static_cast<std::size_t>(h)));
  }

  SUBCASE("default config emits 15 steps") {
    TeacherConfig dflt;
    RngState r(0);
    TeacherModel big = TeacherModel::init(dflt, r);
    const Window pw = random_window(dflt.L, dflt.H, dflt.d_u - 1, 13);
    CHECK(predict_trajectory(big, pw).absolute.size() == 15);
  }

  SUBCASE("scalar head shift linearity for H=1") {
    TeacherConfig h1 = cfg;
    h1.H = 1;
    RngState r(14);
    TeacherModel tm = TeacherModel::init(h1, r);
    const Window w1 = random_window(h1.L, 1, h1.d_u - 1, 15);
    const float base = predict_trajectory(tm, w1).absolute[0];
    tm.b_out.at(0) += 0.5f;
    CHECK(predict_trajectory(tm, w1).absolute[0] ==
          doctest::Approx(base + 0.5f).epsilon(1e-5));
  }
}

TEST_CASE("teacher_loss hand arithmetic") {
  auto cfg = tiny_config();
  RngState rng(16);
  TeacherModel m = TeacherModel::init(cfg, rng);

  Window w = random_window(cfg.L, cfg.H, cfg.d_u - 1, 17);
  auto f = predict_trajectory(m, w);

  SUBCASE("perfect forecast gives zero") {
    for (int h = 0; h < cfg.H; ++h)
      w.future_load[static_cast<std::size_t>(h)] = f.absolute[static_cast<std::size_t>(h)];
    CHECK(teacher_loss(f, w).item() == doctest::Approx(0.0).epsilon(1e-10));
  }

  SUBCASE("fixed errors") {
    Window w2 = w;
    w2.horizon = 2;
    w2.future_load = {f.absolute[0] - 0.1f, f.absolute[1] + 0.3f};
    TrajectoryForecast f2 = f;
    std::vector<float> res(f.residuals.data().begin(), f.residuals.data().begin() + 2);
    f2.residuals = Tensor::from({1, 2}, res);
    f2.absolute = {f.absolute[0], f.absolute[1]};
    CHECK(teacher_loss(f2, w2).item() == doctest::Approx(0.05).epsilon(1e-4));
  }
}

TEST_CASE("shift covariance of the residual target") {
  // Shifting every load in the window by c0 moves anchor and targets
  // together, so the loss under fixed residual predictions is unchanged.
  auto cfg = tiny_config();
  const Window w = random_window(cfg.L, cfg.H, cfg.d_u - 1, 18);
  Window shifted = w;
  const float c0 = 0.37f;
  for (auto& v : shifted.history_load) v += c0;
  for (auto& v : shifted.future_load) v += c0;
  shifted.anchor += c0;

  TrajectoryForecast f;
  f.residuals = Tensor::from({1, cfg.H}, {0.05f, -0.02f, 0.11f});
  f.anchor = w.anchor;
  f.absolute = {0, 0, 0};
  const float a = teacher_loss(f, w).item();
  f.anchor = shifted.anchor;
  const float b = teacher_loss(f, shifted).item();
  CHECK(a == doctest::Approx(b).epsilon(1e-4));
}

TEST_CASE("parameter count closed form") {
  TeacherConfig dflt;
  RngState rng(0);
  TeacherModel m = TeacherModel::init(dflt, rng);
  CHECK(m.param_count() == dflt.param_count());
  // regression constant under the default config with d_u = 7; the
  // reports the teacher at roughly 69K parameters
  CHECK(m.param_count() == 67983);
  CHECK(m.param_count() > 60000);
  CHECK(m.param_count() < 75000);
}

TEST_CASE("full teacher loss gradient matches finite differences") {
  auto cfg = tiny_config();
  RngState rng(19);
  TeacherModel m = TeacherModel::init(cfg, rng);
  const Window w = random_window(cfg.L, cfg.H, cfg.d_u - 1, 20);

  auto params = m.parameters();
  for (auto& p : params) p.zero_grad();
  teacher_loss(predict_trajectory(m, w), w).backward();

  auto f = [&]() { return ref::teacher_loss(m, w); };
  std::mt19937_64 pick(21);
  for (auto& p : params) {
    // spot-check a handful of slots per parameter
    const int checks = static_cast<int>(std::min<std::size_t>(p.size(), 4));
    for (int c = 0; c < checks; ++c) {
      const std::size_t i = pick() % p.size();
      const double fd = ref::central_diff(f, p.data()[i]);
      const double an = p.grad()[i];
      if (std::abs(fd) < 1e-7 && std::abs(an) < 1e-7) continue;
      CHECK(ref::rel_err(fd, an, 1e-4) < 1e-3);
    }
  }
}
