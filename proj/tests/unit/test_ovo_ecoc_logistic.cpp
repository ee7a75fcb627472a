#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "debris/classifiers/ecoc.hpp"
#include "debris/classifiers/logistic.hpp"
#include "debris/classifiers/ovo.hpp"
#include "debris/classifiers/svm.hpp"
#include "debris/rng.hpp"
#include "support.hpp"

using namespace debris;
using debris::testing::normal;
using debris::testing::thrown_kind;

namespace {

struct Labeled {
  Matrix X;
  std::vector<int> y;
};

// K Gaussian clusters on the first K axes, `per` rows each, class-major.
Labeled clusters(int K, int d, int per, double sep, std::uint64_t seed) {
  Rng rng(seed);
  Labeled out{Matrix(K * per, d), {}};
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < per; ++i) {
      const int r = k * per + i;
      for (int j = 0; j < d; ++j) out.X(r, j) = normal(rng) + (j == k % d ? sep : 0.0);
      out.y.push_back(k);
    }
  }
  return out;
}

std::vector<int> to_pm(const std::vector<int>& labels) {
  std::vector<int> y;
  for (int l : labels) y.push_back(l == 0 ? 1 : -1);
  return y;
}

}  // namespace

TEST_CASE("one-vs-one over four classes trains six pairwise models") {
  const auto data = clusters(4, 4, 12, 4.0, 1);
  const auto bundle = train_ovo<BinaryLinearModel>(
      [](const Matrix& X, std::span<const int> y, std::size_t) { return solve_binary_svm_linear(X, y, 1.0); },
      data.X, data.y, 4);
  REQUIRE(bundle.models.size() == 6);
  const auto pairs = ovo_pairs(4);
  for (std::size_t p = 0; p < 6; ++p) CHECK(bundle.models[p].class_pair == pairs[p]);
  int correct = 0;
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) correct += bundle.predict(data.X.row(i).transpose()) == data.y[i];
  CHECK(correct >= 46);
}

TEST_CASE("pairwise wins always sum to the number of pairs") {
  Rng rng(2);
  for (int K = 2; K <= 6; ++K) {
    const auto pairs = ovo_pairs(K);
    CHECK(pairs.size() == static_cast<std::size_t>(K * (K - 1) / 2));
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> f(pairs.size());
      for (auto& v : f) v = rng.uniform(-1.0, 1.0);
      const auto wins = ovo_wins(K, pairs, f);
      CHECK(std::accumulate(wins.begin(), wins.end(), 0) == static_cast<int>(pairs.size()));
    }
  }
}

TEST_CASE("three-class cycle is broken by summed winning margins") {
  const auto pairs = ovo_pairs(3);  // (0,1) (0,2) (1,2)
  // 0 beats 1 by 0.5; 2 beats 0 by 0.9; 1 beats 2 by 0.3.
  // Summed winning |f|: class 0 -> 0.5, class 1 -> 0.3, class 2 -> 0.9.
  const std::vector<double> f{0.5, -0.9, 0.3};
  const auto wins = ovo_wins(3, pairs, f);
  CHECK(wins == std::vector<int>{1, 1, 1});
  CHECK(ovo_vote(3, pairs, f) == 2);
  CHECK(ovo_vote(3, pairs, f) == 2);

  // Equal margins fall through to the lowest class id.
  const std::vector<double> g{0.5, -0.5, 0.5};
  CHECK(ovo_vote(3, pairs, g) == 0);
}

TEST_CASE("two-class one-vs-one equals the binary sign") {
  const auto data = clusters(2, 3, 15, 1.0, 4);
  const auto bundle = train_ovo<BinaryLinearModel>(
      [](const Matrix& X, std::span<const int> y, std::size_t) { return solve_binary_svm_linear(X, y, 1.0); },
      data.X, data.y, 2);
  REQUIRE(bundle.models.size() == 1);
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    const Vector x = data.X.row(i).transpose();
    CHECK(bundle.predict(x) == (bundle.models[0].decision(x) > 0 ? 0 : 1));
  }
}

TEST_CASE("pair errors carry the pair") {
  const auto data = clusters(3, 2, 4, 3.0, 5);
  try {
    train_ovo<BinaryLinearModel>(
        [](const Matrix&, std::span<const int>, std::size_t p) -> BinaryLinearModel {
          if (p == 1) fail(ErrorKind::DegenerateBinaryProblem, "boom");
          return {};
        },
        data.X, data.y, 3);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateBinaryProblem);
    CHECK(std::string(e.what()).find("(0, 2)") != std::string::npos);
  }
  CHECK(thrown_kind([&] {
          train_ovo<BinaryLinearModel>([](const Matrix&, std::span<const int>, std::size_t) { return BinaryLinearModel{}; },
                                       data.X, data.y, 1);
        }) == "ConfigError");
}

TEST_CASE("logistic gradient agrees with central differences") {
  Rng rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 5 + static_cast<int>(rng.below(16));
    const int d = 1 + static_cast<int>(rng.below(5));
    Matrix X(n, d);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      y[i] = rng.bernoulli(0.5) ? 1 : -1;
      for (int j = 0; j < d; ++j) X(i, j) = normal(rng);
    }
    y[0] = 1;
    y[1] = -1;
    const double reg = std::pow(10.0, rng.uniform(-4.0, 0.0));
    Vector w(d);
    for (int j = 0; j < d; ++j) w(j) = normal(rng);
    const double b = normal(rng);

    Vector gw;
    double gb = 0.0;
    logistic_objective(X, y, reg, w, b, &gw, &gb);

    const double h = 1e-5;
    Vector num(d + 1);
    for (int j = 0; j < d; ++j) {
      Vector wp = w, wm = w;
      wp(j) += h;
      wm(j) -= h;
      num(j) = (logistic_objective(X, y, reg, wp, b) - logistic_objective(X, y, reg, wm, b)) / (2 * h);
    }
    num(d) = (logistic_objective(X, y, reg, w, b + h) - logistic_objective(X, y, reg, w, b - h)) / (2 * h);
    Vector ana(d + 1);
    ana << gw, gb;
    const double rel = (ana - num).norm() / std::max(num.norm(), 1e-8);
    worst = std::max(worst, rel);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("fitted logistic model reaches a stationary point") {
  const auto data = clusters(2, 3, 20, 1.0, 8);
  const auto y = to_pm(data.y);
  const auto fit = fit_logreg_binary(data.X, y, 1e-2);
  CHECK(fit.gradient_norm < 1e-6);
  Vector gw;
  double gb = 0.0;
  logistic_objective(data.X, y, 1e-2, fit.model.w, fit.model.b, &gw, &gb);
  CHECK(std::sqrt(gw.squaredNorm() + gb * gb) < 1e-6);
}

TEST_CASE("symmetric data gives a zero bias") {
  Rng rng(9);
  Matrix X(20, 2);
  std::vector<int> y(20);
  for (int i = 0; i < 10; ++i) {
    const double a = normal(rng) + 0.5, c = normal(rng);
    X.row(i) << a, c;
    X.row(i + 10) << -a, -c;
    y[i] = 1;
    y[i + 10] = -1;
  }
  const auto m = train_logreg_binary(X, y, 1e-2);
  CHECK(std::abs(m.b) < 1e-6);
}

TEST_CASE("heavy regularization collapses to the majority class") {
  const auto data = clusters(2, 3, 10, 2.0, 10);
  std::vector<int> y = to_pm(data.y);
  y[10] = 1;  // 11 positive, 9 negative
  y[11] = 1;
  const auto m = train_logreg_binary(data.X, y, 1e6);
  CHECK(m.w.norm() < 1e-4);
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) CHECK(m.decision(data.X.row(i).transpose()) > 0.0);
  CHECK(thrown_kind([&] { train_logreg_binary(data.X, std::vector<int>(20, -1), 1.0); }) ==
        "DegenerateBinaryProblem");
}

TEST_CASE("one-vs-one coding has one +1 and one -1 per column") {
  const auto code = ovo_coding(4);
  REQUIRE(code.rows() == 4);
  REQUIRE(code.cols() == 6);
  for (Eigen::Index c = 0; c < code.cols(); ++c) {
    int plus = 0, minus = 0;
    for (Eigen::Index k = 0; k < 4; ++k) {
      plus += code(k, c) == 1;
      minus += code(k, c) == -1;
    }
    CHECK(plus == 1);
    CHECK(minus == 1);
  }
  CHECK_NOTHROW(validate_coding(code));
  CHECK_NOTHROW(validate_coding(one_vs_all_coding(3)));
}

TEST_CASE("invalid coding matrices are rejected") {
  CodingMatrix bad_entry = ovo_coding(3);
  bad_entry(0, 0) = 2;
  CHECK(thrown_kind([&] { validate_coding(bad_entry); }) == "CodingMatrixError");

  CodingMatrix one_sided(3, 2);
  one_sided << 1, 1, 1, -1, 0, -1;  // column 0 has no -1
  CHECK(thrown_kind([&] { validate_coding(one_sided); }) == "CodingMatrixError");

  CodingMatrix duplicate_rows(3, 2);
  duplicate_rows << 1, -1, 1, -1, -1, 1;
  CHECK(thrown_kind([&] { validate_coding(duplicate_rows); }) == "CodingMatrixError");

  CodingMatrix zero_row(3, 2);
  zero_row << 1, -1, -1, 1, 0, 0;
  CHECK(thrown_kind([&] { validate_coding(zero_row); }) == "CodingMatrixError");

  const auto data = clusters(3, 2, 5, 3.0, 11);
  CHECK(thrown_kind([&] { train_ecoc(data.X, data.y, bad_entry, 1e-2); }) == "CodingMatrixError");
}

TEST_CASE("one-vs-all decoding equals argmax of learner probability") {
  const auto data = clusters(3, 3, 15, 1.5, 12);
  const auto model = train_ecoc(data.X, data.y, one_vs_all_coding(3), 1e-2);
  Rng rng(13);
  for (int q = 0; q < 200; ++q) {
    Vector x(3);
    for (int j = 0; j < 3; ++j) x(j) = 2.0 * normal(rng);
    int best = 0;
    double best_p = -1.0;
    for (int k = 0; k < 3; ++k) {
      const double p = model.learners[k].probability(x);
      if (p > best_p) {
        best_p = p;
        best = k;
      }
    }
    CHECK(model.predict(x) == best);
  }
}

TEST_CASE("ECOC losses follow the mean softplus rule") {
  const auto data = clusters(4, 4, 10, 3.0, 14);
  const auto model = train_ecoc(data.X, data.y, ovo_coding(4), 1e-2);
  REQUIRE(model.learners.size() == 6);
  const Vector x = data.X.row(7).transpose();
  const Vector losses = model.losses(x);
  for (int k = 0; k < 4; ++k) {
    double sum = 0.0;
    int nz = 0;
    for (int c = 0; c < 6; ++c) {
      const int code = model.coding(k, c);
      if (code == 0) continue;
      const double p = model.learners[c].probability(x);
      sum += -std::log(code > 0 ? p : 1.0 - p);
      ++nz;
    }
    CHECK(losses(k) == doctest::Approx(sum / nz).epsilon(1e-9));
  }
  int correct = 0;
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) correct += model.predict(data.X.row(i).transpose()) == data.y[i];
  CHECK(correct >= 38);
}

TEST_CASE("two-class ECOC equals the single logistic learner") {
  const auto data = clusters(2, 2, 20, 0.8, 15);
  const auto model = train_ecoc(data.X, data.y, ovo_coding(2), 1e-2);
  const auto single = train_logreg_binary(data.X, to_pm(data.y), 1e-2);
  Rng rng(16);
  for (int q = 0; q < 100; ++q) {
    Vector x(2);
    x << 2.0 * normal(rng), 2.0 * normal(rng);
    CHECK(model.predict(x) == (single.decision(x) > 0 ? 0 : 1));
  }
}

TEST_CASE("logistic scores scaled by a positive constant keep the argmax") {
  const auto data = clusters(3, 3, 12, 1.5, 17);
  const auto model = train_ecoc(data.X, data.y, one_vs_all_coding(3), 1e-2);
  Rng rng(18);
  for (int q = 0; q < 100; ++q) {
    Vector x(3);
    for (int j = 0; j < 3; ++j) x(j) = 2.0 * normal(rng);
    auto argmax = [&](double s) {
      int best = 0;
      for (int k = 1; k < 3; ++k)
        if (s * model.learners[k].decision(x) > s * model.learners[best].decision(x)) best = k;
      return best;
    };
    CHECK(argmax(1.0) == argmax(7.5));
    CHECK(argmax(1.0) == model.predict(x));
  }
}
