#pragma once

#include <cstddef>
#include <span>
#include <utility>

#include "debris/types.hpp"

namespace debris {

/// Decision value f(x) = w.x + b; positive means `class_pair.first`.
struct BinaryLinearModel {
  Vector w;
  double b = 0.0;
  std::pair<int, int> class_pair{0, 1};

  double decision(const Eigen::Ref<const Vector>& x) const { return w.dot(x) + b; }
};

/// f(x) = sum_i coeff_i * exp(-gamma * |sv_i - x|^2) + b, coeff_i = alpha_i * y_i.
struct KernelModel {
  Matrix support_vectors;
  Vector dual_coeffs;
  double b = 0.0;
  double gamma = 1.0;
  std::pair<int, int> class_pair{0, 1};

  double decision(const Eigen::Ref<const Vector>& x) const;
};

struct SmoOptions {
  /// Stop when the maximal KKT violation m(alpha) - M(alpha) drops below this.
  double tolerance = 1e-3;
  /// Linear solver only: keep tightening `tolerance` until the relative
  /// duality gap is below this.
  double relative_gap = 1e-6;
  /// Upper bound on SMO steps, in multiples of N ("epochs").
  std::size_t max_epochs = 10000;
};

/// Result of the box- and equality-constrained dual
///   max_a  sum a_i - 1/2 sum_ij a_i a_j y_i y_j K_ij,  0 <= a_i <= C,  y.a = 0.
struct DualSolution {
  Vector alpha;
  double b = 0.0;
  double dual_objective = 0.0;
  double max_violation = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// SMO with second-order working-set selection over a precomputed Gram
/// matrix. `warm` resumes from a previous solution on the same problem.
DualSolution solve_svm_dual(const Matrix& gram, std::span<const int> y, double C,
                            const SmoOptions& options = {}, const DualSolution* warm = nullptr);

/// 1/2 |w|^2 + C * sum max(0, 1 - y_i (w.x_i + b)).
double svm_primal_objective(const Vector& w, double b, const Matrix& X, std::span<const int> y,
                            double C);

/// Interval [lo, hi] of biases minimising the hinge term for fixed w.
std::pair<double, double> optimal_bias_interval(const Vector& scores, std::span<const int> y);

struct LinearSvmFit {
  BinaryLinearModel model;
  Vector alpha;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  std::size_t iterations = 0;
};

/// Soft-margin linear SVM with an unregularized bias. Labels are +1/-1.
/// Throws DegenerateBinaryProblem when only one label is present.
LinearSvmFit fit_linear_svm(const Matrix& X, std::span<const int> y, double C,
                            const SmoOptions& options = {});
BinaryLinearModel solve_binary_svm_linear(const Matrix& X, std::span<const int> y, double C,
                                          const SmoOptions& options = {});

struct RbfSvmFit {
  KernelModel model;
  DualSolution dual;
};

RbfSvmFit fit_rbf_svm(const Matrix& X, std::span<const int> y, double C, double gamma,
                      const SmoOptions& options = {});
KernelModel solve_binary_svm_rbf(const Matrix& X, std::span<const int> y, double C, double gamma,
                                 const SmoOptions& options = {});

Matrix rbf_gram(const Matrix& X, double gamma);

}  // namespace debris
