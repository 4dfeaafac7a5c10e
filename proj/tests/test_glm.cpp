#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lnp/glm.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lnp;
using Catch::Approx;

namespace {

FeatureMatrix one_feature_matrix(const std::vector<double>& column) {
  FeatureMatrix m;
  m.kind = MatrixKind::count;
  m.feature_names = {"x"};
  for (std::size_t i = 0; i < column.size(); ++i) {
    m.patient_ids.push_back("p" + std::to_string(i));
    if (column[i] != 0.0)
      m.rows.push_back({{0, column[i]}});
    else
      m.rows.push_back({});
  }
  return m;
}

Model intercept_model(double intercept) {
  Model m;
  m.feature_names = {};
  m.weights = {};
  m.feature_means = {};
  m.intercept = intercept;
  return m;
}

}  // namespace

TEST_CASE("class weights") {
  SECTION("balanced data gives unit weights") {
    std::vector<int> y(10, 0);
    for (int i = 0; i < 5; ++i) y[i] = 1;
    auto w = compute_class_weights(y);
    CHECK(w.positive == Approx(1.0).epsilon(1e-12));
    CHECK(w.negative == Approx(1.0).epsilon(1e-12));
  }
  SECTION("178 cases of 472") {
    std::vector<int> y(472, 0);
    for (int i = 0; i < 178; ++i) y[i] = 1;
    auto w = compute_class_weights(y);
    CHECK(w.positive == Approx(472.0 / (2.0 * 178.0)).epsilon(1e-12));
    CHECK(w.negative == Approx(472.0 / (2.0 * 294.0)).epsilon(1e-12));
    CHECK(w.positive == Approx(1.3258426966).margin(1e-9));
    CHECK(w.negative == Approx(0.8027210884).margin(1e-9));
  }
  SECTION("1 case of 100") {
    std::vector<int> y(100, 0);
    y[0] = 1;
    auto w = compute_class_weights(y);
    CHECK(w.positive == Approx(50.0).epsilon(1e-12));
    CHECK(w.negative == Approx(100.0 / 198.0).epsilon(1e-12));
  }
  SECTION("single-class labels are rejected") {
    CHECK_THROWS_AS(compute_class_weights(std::vector<int>(5, 1)), data_error);
  }
}

TEST_CASE("loss at the origin is C n ln 2 under unit weights") {
  auto X = one_feature_matrix({1.0, 2.0, 0.0, 3.0});
  std::vector<int> y = {1, 0, 1, 0};
  std::vector<double> s(4, 1.0);
  auto lg = loss_and_gradient({0.0}, 0.0, X, y, 2.5, s);
  CHECK(lg.loss == Approx(2.5 * 4.0 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("with no samples only the penalty remains") {
  FeatureMatrix X;
  X.kind = MatrixKind::count;
  X.feature_names = {"a", "b"};
  std::vector<double> w = {3.0, -4.0};
  auto lg = loss_and_gradient(w, 1.0, X, {}, 1.0, {});
  CHECK(lg.loss == Approx(0.5 * 25.0).epsilon(1e-14));
  CHECK(lg.gradient == w);
  CHECK(lg.intercept_gradient == 0.0);
}

TEST_CASE("non-finite inputs are rejected") {
  auto X = one_feature_matrix({1.0});
  std::vector<int> y = {1};
  std::vector<double> s = {1.0};
  CHECK_THROWS_AS(
      loss_and_gradient({std::numeric_limits<double>::infinity()}, 0.0, X, y,
                        1.0, s),
      data_error);
  CHECK_THROWS_AS(loss_and_gradient({0.0}, std::nan(""), X, y, 1.0, s),
                  data_error);
}

TEST_CASE("analytic gradient matches central finite differences") {
  Rng rng(401);
  for (int trial = 0; trial < 10; ++trial) {
    auto inst = oracle::random_instance(rng, 20, 8);
    auto X = oracle::to_matrix(inst);
    std::vector<double> w(inst.d());
    for (auto& v : w) v = rng.uniform_range(-1.0, 1.0);
    double b = rng.uniform_range(-1.0, 1.0);

    auto lg = loss_and_gradient(w, b, X, inst.y, inst.C, inst.sample_weights);
    const double h = 1e-5;
    for (std::size_t j = 0; j <= inst.d(); ++j) {
      auto probe = [&](double delta) {
        auto w2 = w;
        double b2 = b;
        if (j < inst.d()) w2[j] += delta;
        else b2 += delta;
        return loss_and_gradient(w2, b2, X, inst.y, inst.C,
                                 inst.sample_weights)
            .loss;
      };
      double fd = (probe(h) - probe(-h)) / (2.0 * h);
      double an = j < inst.d() ? lg.gradient[j] : lg.intercept_gradient;
      CHECK(std::abs(fd - an) / std::max(1.0, std::abs(an)) < 1e-6);
    }
  }
}

TEST_CASE("objective is convex along random segments") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = oracle::random_instance(rng, 15, 6);
    auto X = oracle::to_matrix(inst);
    std::vector<double> w1(inst.d()), w2(inst.d()), wm(inst.d());
    for (std::size_t j = 0; j < inst.d(); ++j) {
      w1[j] = rng.uniform_range(-2.0, 2.0);
      w2[j] = rng.uniform_range(-2.0, 2.0);
      wm[j] = 0.5 * (w1[j] + w2[j]);
    }
    double b1 = rng.uniform_range(-2.0, 2.0), b2 = rng.uniform_range(-2.0, 2.0);
    auto f = [&](const std::vector<double>& w, double b) {
      return loss_and_gradient(w, b, X, inst.y, inst.C, inst.sample_weights)
          .loss;
    };
    double mid = f(wm, 0.5 * (b1 + b2));
    double avg = 0.5 * (f(w1, b1) + f(w2, b2));
    CHECK(mid <= avg + 1e-9 * std::max(1.0, std::abs(avg)));
  }
}

TEST_CASE("sag separates linearly separable data at a large C") {
  auto X = one_feature_matrix({-2.0, -1.0, 1.0, 2.0});
  std::vector<int> y = {0, 0, 1, 1};
  std::vector<double> s(4, 1.0);
  auto model = fit_sag(X, y, 1e4, s);
  for (std::size_t i = 0; i < 4; ++i) {
    bool pred = classify(model, X.dense_row(i));
    CHECK(pred == (y[i] != 0));
  }
}

TEST_CASE("sag reaches the full-batch optimum") {
  Rng rng(2024);
  auto inst = oracle::random_instance(rng, 20, 5);
  auto X = oracle::to_matrix(inst);
  SagOptions opts;
  opts.max_epochs = 20000;
  opts.tolerance = 1e-13;
  opts.seed = 9;
  auto model = fit_sag(X, inst.y, inst.C, inst.sample_weights, opts);
  double f_sag = oracle::objective(inst, model.weights, model.intercept);
  double f_star = oracle::fit_full_batch(inst);
  CHECK(std::abs(f_sag - f_star) / std::max(1.0, std::abs(f_star)) < 1e-6);
}

TEST_CASE("sag is deterministic for a fixed seed") {
  Rng rng(5);
  auto inst = oracle::random_instance(rng, 30, 6);
  auto X = oracle::to_matrix(inst);
  SagOptions opts;
  opts.seed = 123;
  auto a = fit_sag(X, inst.y, inst.C, inst.sample_weights, opts);
  auto b = fit_sag(X, inst.y, inst.C, inst.sample_weights, opts);
  CHECK(a.weights == b.weights);
  CHECK(a.intercept == b.intercept);
}

TEST_CASE("sag final objective never exceeds the objective at zero") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    auto inst = oracle::random_instance(rng, 25, 6);
    auto X = oracle::to_matrix(inst);
    auto model = fit_sag(X, inst.y, inst.C, inst.sample_weights);
    double at_zero =
        oracle::objective(inst, std::vector<double>(inst.d(), 0.0), 0.0);
    double at_fit = oracle::objective(inst, model.weights, model.intercept);
    CHECK(at_fit <= at_zero + 1e-12);
  }
}

TEST_CASE("scaling sample weights by k matches scaling C by k") {
  Rng rng(63);
  auto inst = oracle::random_instance(rng, 20, 4);
  auto X = oracle::to_matrix(inst);
  const double k = 3.0;
  SagOptions opts;
  opts.max_epochs = 20000;
  opts.tolerance = 1e-13;
  auto scaled_weights = inst.sample_weights;
  for (auto& s : scaled_weights) s *= k;
  auto a = fit_sag(X, inst.y, inst.C, scaled_weights, opts);
  auto b = fit_sag(X, inst.y, inst.C * k, inst.sample_weights, opts);
  for (std::size_t j = 0; j < inst.d(); ++j)
    CHECK(a.weights[j] == Approx(b.weights[j]).margin(1e-5));
  CHECK(a.intercept == Approx(b.intercept).margin(1e-5));
}

TEST_CASE("non-convergence is reported, not thrown") {
  auto X = one_feature_matrix({-2.0, -1.0, 1.0, 2.0});
  std::vector<int> y = {0, 0, 1, 1};
  SagOptions opts;
  opts.max_epochs = 1;
  opts.tolerance = 1e-16;
  auto model = fit_sag(X, y, 100.0, std::vector<double>(4, 1.0), opts);
  CHECK_FALSE(model.metadata.converged);
}

TEST_CASE("the default C grid is exactly 1e-5 .. 1e5") {
  auto grid = TrainConfig::default_c_grid();
  REQUIRE(grid.size() == 11);
  const double expected[] = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1e0,
                             1e1,  1e2,  1e3,  1e4,  1e5};
  for (std::size_t i = 0; i < 11; ++i) CHECK(grid[i] == expected[i]);
}

TEST_CASE("grid search returns the dominating candidate") {
  // Non-negative feature with the boundary away from zero: a heavily
  // regularized fit predicts everything positive, so the larger C dominates.
  Rng rng(8);
  std::vector<double> col;
  std::vector<int> y;
  for (int i = 0; i < 40; ++i) {
    bool label = i % 2 == 0;
    y.push_back(label);
    col.push_back((label ? 2.0 : 0.3) + rng.uniform_range(0.0, 0.2));
  }
  auto X = one_feature_matrix(col);
  TrainConfig cfg;
  cfg.C_grid = {1e-8, 10.0};
  cfg.optimizer.seed = 4;
  auto result = grid_search(X, y, cfg);
  CHECK(result.best_C == 10.0);
  REQUIRE(result.accuracy_table.size() == 2);
  CHECK(result.accuracy_table[1].second > result.accuracy_table[0].second);
}

TEST_CASE("exact accuracy ties resolve to the smaller C") {
  // wide margins: both candidates classify every fold perfectly
  std::vector<double> col;
  std::vector<int> y;
  for (int i = 0; i < 20; ++i) {
    bool label = i % 2 == 0;
    y.push_back(label);
    col.push_back(label ? 10.0 : -10.0);
  }
  auto X = one_feature_matrix(col);
  TrainConfig cfg;
  cfg.C_grid = {1e-2, 1e3};
  auto result = grid_search(X, y, cfg);
  REQUIRE(result.accuracy_table[0].second == result.accuracy_table[1].second);
  CHECK(result.best_C == 1e-2);
}

TEST_CASE("stratification failure is reported") {
  std::vector<double> col(24, 1.0);
  std::vector<int> y(24, 0);
  for (int i = 0; i < 4; ++i) y[i] = 1;  // 4 cases cannot fill 5 folds
  auto X = one_feature_matrix(col);
  TrainConfig cfg;
  CHECK_THROWS_AS(grid_search(X, y, cfg), data_error);
}

TEST_CASE("predict_proba") {
  SECTION("zero weights give one half") {
    Model m;
    m.feature_names = {"x"};
    m.weights = {0.0};
    m.feature_means = {0.0};
    CHECK(predict_proba(m, {0.0}) == 0.5);
  }
  SECTION("sigma(ln 3) is 3/4") {
    Model m;
    m.feature_names = {"x"};
    m.weights = {1.0};
    m.feature_means = {0.0};
    CHECK(predict_proba(m, {std::log(3.0)}) == Approx(0.75).margin(1e-12));
  }
  SECTION("extreme logits stay finite") {
    auto m = intercept_model(-800.0);
    double p = predict_proba(m, {});
    CHECK(p >= 0.0);
    CHECK(std::isfinite(p));
    p = predict_proba(intercept_model(800.0), {});
    CHECK(p <= 1.0);
    CHECK(std::isfinite(p));
  }
  SECTION("dimension mismatch is an error") {
    Model m;
    m.feature_names = {"x"};
    m.weights = {1.0};
    m.feature_means = {0.0};
    CHECK_THROWS_AS(predict_proba(m, {1.0, 2.0}), data_error);
  }
}

TEST_CASE("classification threshold is a half, inclusive") {
  CHECK_FALSE(classify(intercept_model(std::log(0.49 / 0.51)), {}));
  CHECK(classify(intercept_model(std::log(0.53 / 0.47)), {}));
  CHECK(classify(intercept_model(0.0), {}));  // exactly 0.5
}

TEST_CASE("probability is monotone in a positive-weight feature") {
  Rng rng(90);
  Model m;
  m.feature_names = {"a", "b"};
  m.weights = {0.7, -0.3};
  m.feature_means = {0.0, 0.0};
  m.intercept = 0.1;
  for (int trial = 0; trial < 100; ++trial) {
    double a = rng.uniform_range(-3.0, 3.0);
    double b = rng.uniform_range(-3.0, 3.0);
    double bump = rng.uniform_range(0.0, 2.0);
    CHECK(predict_proba(m, {a + bump, b}) >= predict_proba(m, {a, b}));
  }
}

TEST_CASE("models round-trip through model.json") {
  Model m;
  m.feature_names = {"C0024143", "RENAL"};
  m.weights = {1.26, 0.64};
  m.intercept = -0.45;
  m.C = 0.01;
  m.feature_means = {0.25, 0.5};
  m.metadata.seed = 7;
  m.metadata.converged = true;
  m.metadata.cv_accuracy_table = {{0.01, 0.9}, {0.1, 0.85}};
  m.metadata.train_fingerprint = "00ff00ff00ff00ff";
  m.metadata.model_kind = "mixed";

  testutil::TempDir dir("model");
  save_model(m, dir.file("model.json"));
  auto loaded = load_model(dir.file("model.json"));
  CHECK(loaded == m);
}
