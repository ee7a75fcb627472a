#pragma once

#include <span>

#include "debris/types.hpp"

namespace debris {

struct LogisticModel {
  Vector w;
  double b = 0.0;

  double decision(const Eigen::Ref<const Vector>& x) const { return w.dot(x) + b; }
  /// P(y = +1 | x).
  double probability(const Eigen::Ref<const Vector>& x) const;
};

struct LogisticOptions {
  int max_iterations = 5000;
  double gradient_tolerance = 1e-6;
  int history = 10;
};

struct LogisticFit {
  LogisticModel model;
  double objective = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
};

/// Mean log-loss plus (reg/2)|w|^2 for labels +1/-1; the bias is not
/// penalized. Fills the gradient when the pointers are non-null.
double logistic_objective(const Matrix& X, std::span<const int> y, double reg, const Vector& w,
                          double b, Vector* grad_w = nullptr, double* grad_b = nullptr);

/// log(1 + exp(t)) without overflow.
double softplus(double t);

/// Deterministic L-BFGS with backtracking Armijo line search; stops when the
/// full gradient norm falls below the tolerance or after max_iterations.
LogisticFit fit_logreg_binary(const Matrix& X, std::span<const int> y, double reg,
                              const LogisticOptions& options = {});
LogisticModel train_logreg_binary(const Matrix& X, std::span<const int> y, double reg,
                                  const LogisticOptions& options = {});

}  // namespace debris
