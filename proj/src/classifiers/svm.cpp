#include "debris/classifiers/svm.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "debris/error.hpp"

namespace debris {
namespace {

constexpr double kTau = 1e-12;

void check_binary_problem(const Matrix& X, std::span<const int> y, double C) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) {
    fail(ErrorKind::DimensionError, fmt::format("{} rows but {} labels", X.rows(), y.size()));
  }
  if (!(C > 0.0) || !std::isfinite(C)) fail(ErrorKind::ConfigError, "C must be positive and finite");
  bool pos = false, neg = false;
  for (int v : y) {
    if (v == 1) pos = true;
    else if (v == -1) neg = true;
    else fail(ErrorKind::DimensionError, fmt::format("binary labels must be +1/-1, got {}", v));
  }
  if (!pos || !neg) {
    fail(ErrorKind::DegenerateBinaryProblem, "binary problem needs both +1 and -1 labels");
  }
}

// State of the SMO iteration; kept separate so the linear solver can resume
// with a tighter tolerance without losing the gradient.
struct SmoState {
  const Matrix& K;
  std::span<const int> y;
  double C;
  Vector alpha;
  Vector G;  // gradient of 1/2 a'Qa - e'a, Q_ij = y_i y_j K_ij

  bool up(Eigen::Index t) const { return y[t] == 1 ? alpha[t] < C : alpha[t] > 0; }
  bool low(Eigen::Index t) const { return y[t] == 1 ? alpha[t] > 0 : alpha[t] < C; }

  // Returns the maximal violation; sets (i, j) to the working pair.
  double select(Eigen::Index& i, Eigen::Index& j) const {
    const auto n = alpha.size();
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (up(t) && -y[t] * G[t] > gmax) {
        gmax = -y[t] * G[t];
        i = t;
      }
    }
    j = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      if (!low(t)) continue;
      const double v = -y[t] * G[t];
      gmin = std::min(gmin, v);
      const double bdiff = gmax - v;
      if (i >= 0 && bdiff > 0) {
        double a = K(i, i) + K(t, t) - 2.0 * K(i, t);
        if (a <= 0) a = kTau;
        const double score = -(bdiff * bdiff) / a;
        if (score < best) {
          best = score;
          j = t;
        }
      }
    }
    return gmax - gmin;
  }

  void step(Eigen::Index i, Eigen::Index j) {
    const double yi = y[i], yj = y[j];
    const double old_i = alpha[i], old_j = alpha[j];
    const double Qij = yi * yj * K(i, j);
    if (yi != yj) {
      double quad = K(i, i) + K(j, j) + 2.0 * Qij;
      if (quad <= 0) quad = kTau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
      } else {
        if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = -diff; }
      }
      if (diff > 0) {
        if (alpha[i] > C) { alpha[i] = C; alpha[j] = C - diff; }
      } else {
        if (alpha[j] > C) { alpha[j] = C; alpha[i] = C + diff; }
      }
    } else {
      double quad = K(i, i) + K(j, j) - 2.0 * Qij;
      if (quad <= 0) quad = kTau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) { alpha[i] = C; alpha[j] = sum - C; }
      } else {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = sum; }
      }
      if (sum > C) {
        if (alpha[j] > C) { alpha[j] = C; alpha[i] = sum - C; }
      } else {
        if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = sum; }
      }
    }
    const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
    for (Eigen::Index t = 0; t < alpha.size(); ++t) {
      G[t] += y[t] * (yi * K(t, i) * di + yj * K(t, j) * dj);
    }
  }

  double bias() const {
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    int free = 0;
    for (Eigen::Index t = 0; t < alpha.size(); ++t) {
      const double yG = y[t] * G[t];
      if (alpha[t] >= C) {
        if (y[t] == -1) ub = std::min(ub, yG); else lb = std::max(lb, yG);
      } else if (alpha[t] <= 0) {
        if (y[t] == 1) ub = std::min(ub, yG); else lb = std::max(lb, yG);
      } else {
        ++free;
        sum_free += yG;
      }
    }
    const double rho = free > 0 ? sum_free / free : (ub + lb) / 2.0;
    return -rho;
  }

  double dual_objective() const { return 0.5 * alpha.sum() - 0.5 * alpha.dot(G); }
};

DualSolution run_smo(SmoState& s, double tolerance, std::size_t max_iterations,
                     std::size_t already) {
  DualSolution out;
  std::size_t it = already;
  double violation = 0.0;
  while (true) {
    Eigen::Index i = -1, j = -1;
    violation = s.select(i, j);
    if (violation < tolerance || i < 0 || j < 0) {
      out.converged = true;
      break;
    }
    if (it >= max_iterations) break;
    s.step(i, j);
    ++it;
  }
  out.alpha = s.alpha;
  out.b = s.bias();
  out.dual_objective = s.dual_objective();
  out.max_violation = std::max(violation, 0.0);
  out.iterations = it;
  return out;
}

}  // namespace

double KernelModel::decision(const Eigen::Ref<const Vector>& x) const {
  double f = b;
  for (Eigen::Index i = 0; i < support_vectors.rows(); ++i) {
    const double d2 = (support_vectors.row(i).transpose() - x).squaredNorm();
    f += dual_coeffs[i] * std::exp(-gamma * d2);
  }
  return f;
}

DualSolution solve_svm_dual(const Matrix& gram, std::span<const int> y, double C,
                            const SmoOptions& options, const DualSolution* warm) {
  const auto n = static_cast<Eigen::Index>(y.size());
  if (gram.rows() != n || gram.cols() != n) fail(ErrorKind::DimensionError, "Gram matrix size mismatch");
  SmoState s{gram, y, C, Vector::Zero(n), Vector::Constant(n, -1.0)};
  std::size_t already = 0;
  if (warm) {
    s.alpha = warm->alpha;
    s.G = Vector::Constant(n, -1.0);
    for (Eigen::Index t = 0; t < n; ++t) {
      if (s.alpha[t] == 0) continue;
      for (Eigen::Index r = 0; r < n; ++r) s.G[r] += y[r] * y[t] * gram(r, t) * s.alpha[t];
    }
    already = warm->iterations;
  }
  return run_smo(s, options.tolerance, options.max_epochs * static_cast<std::size_t>(n), already);
}

double svm_primal_objective(const Vector& w, double b, const Matrix& X, std::span<const int> y,
                            double C) {
  const Vector scores = X * w;
  double hinge = 0.0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    hinge += std::max(0.0, 1.0 - y[i] * (scores[i] + b));
  }
  return 0.5 * w.squaredNorm() + C * hinge;
}

std::pair<double, double> optimal_bias_interval(const Vector& scores, std::span<const int> y) {
  // Each hinge term has its kink at b = y_i - s_i; the derivative of the sum
  // is (number of kinks below b) - P, so the minimum spans the P-th and
  // (P+1)-th smallest kinks.
  std::vector<double> kinks(y.size());
  std::size_t positives = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    kinks[i] = y[i] - scores[static_cast<Eigen::Index>(i)];
    if (y[i] == 1) ++positives;
  }
  std::sort(kinks.begin(), kinks.end());
  return {kinks[positives - 1], kinks[positives]};
}

LinearSvmFit fit_linear_svm(const Matrix& X, std::span<const int> y, double C,
                            const SmoOptions& options) {
  check_binary_problem(X, y, C);
  const Matrix gram = X * X.transpose();
  const auto n = static_cast<std::size_t>(X.rows());
  SmoState s{gram, y, C, Vector::Zero(X.rows()), Vector::Constant(X.rows(), -1.0)};
  const std::size_t max_it = options.max_epochs * n;

  LinearSvmFit fit;
  double tol = options.tolerance;
  std::size_t it = 0;
  while (true) {
    const auto sol = run_smo(s, tol, max_it, it);
    it = sol.iterations;
    Vector coeff(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) coeff[i] = sol.alpha[i] * y[i];
    const Vector w = X.transpose() * coeff;
    const Vector scores = X * w;
    const auto [lo, hi] = optimal_bias_interval(scores, y);
    const double b = std::clamp(sol.b, lo, hi);
    fit.model.w = w;
    fit.model.b = b;
    fit.alpha = sol.alpha;
    fit.dual_objective = sol.dual_objective;
    fit.primal_objective = svm_primal_objective(w, b, X, y, C);
    fit.iterations = it;
    const double gap = (fit.primal_objective - fit.dual_objective) /
                       std::max(std::abs(fit.primal_objective), 1e-12);
    if (gap <= options.relative_gap || it >= max_it || tol < 1e-14) break;
    tol *= 0.1;
  }
  return fit;
}

BinaryLinearModel solve_binary_svm_linear(const Matrix& X, std::span<const int> y, double C,
                                          const SmoOptions& options) {
  return fit_linear_svm(X, y, C, options).model;
}

Matrix rbf_gram(const Matrix& X, double gamma) {
  const Vector sq = X.rowwise().squaredNorm();
  Matrix gram = X * X.transpose();
  for (Eigen::Index i = 0; i < gram.rows(); ++i) {
    for (Eigen::Index j = 0; j < gram.cols(); ++j) {
      const double d2 = std::max(0.0, sq[i] + sq[j] - 2.0 * gram(i, j));
      gram(i, j) = i == j ? 1.0 : std::exp(-gamma * d2);
    }
  }
  return gram;
}

RbfSvmFit fit_rbf_svm(const Matrix& X, std::span<const int> y, double C, double gamma,
                      const SmoOptions& options) {
  check_binary_problem(X, y, C);
  if (!(gamma > 0.0) || !std::isfinite(gamma)) fail(ErrorKind::ConfigError, "gamma must be positive");
  const Matrix gram = rbf_gram(X, gamma);
  RbfSvmFit fit;
  fit.dual = solve_svm_dual(gram, y, C, options);
  std::vector<Eigen::Index> sv;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (fit.dual.alpha[i] > 0) sv.push_back(i);
  }
  fit.model.support_vectors = X(sv, Eigen::all);
  fit.model.dual_coeffs.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t k = 0; k < sv.size(); ++k) {
    fit.model.dual_coeffs[static_cast<Eigen::Index>(k)] = fit.dual.alpha[sv[k]] * y[sv[k]];
  }
  fit.model.b = fit.dual.b;
  fit.model.gamma = gamma;
  return fit;
}

KernelModel solve_binary_svm_rbf(const Matrix& X, std::span<const int> y, double C, double gamma,
                                 const SmoOptions& options) {
  return fit_rbf_svm(X, y, C, gamma, options).model;
}

}  // namespace debris
