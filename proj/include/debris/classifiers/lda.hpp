#pragma once

#include <span>

#include "debris/types.hpp"

namespace debris {

/// Shrinkage LDA. Discriminants are
///   delta_k(x) = x' A mu_k - 1/2 mu_k' A mu_k + log pi_k,  A = (Sigma + lambda I)^-1,
/// with Sigma the pooled within-class covariance (divided by N - K). The
/// model keeps A mu_k per class, which is all prediction needs.
struct LdaModel {
  Matrix class_means;   // K x D
  Matrix coefficients;  // K x D, row k = (A mu_k)'
  Vector offsets;       // K
  Vector priors;        // K
  double lambda = 0.0;

  Vector discriminants(const Eigen::Ref<const Vector>& x) const;
  /// argmax of the discriminants, ties to the lowest class id.
  int predict(const Eigen::Ref<const Vector>& x) const;
};

/// Throws InsufficientData if a class has fewer than 2 rows, and
/// SingularCovariance when Sigma + lambda I is not positive definite (always
/// the case for lambda = 0 once D > N - K).
LdaModel train_lda(const Matrix& X, std::span<const int> labels, int num_classes, double lambda);

}  // namespace debris
