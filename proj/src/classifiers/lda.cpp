#include "debris/classifiers/lda.hpp"

#include <fmt/format.h>

#include <cmath>
#include <vector>

#include "debris/error.hpp"

namespace debris {

Vector LdaModel::discriminants(const Eigen::Ref<const Vector>& x) const {
  return coefficients * x + offsets;
}

int LdaModel::predict(const Eigen::Ref<const Vector>& x) const {
  if (coefficients.rows() == 0) fail(ErrorKind::EmptyModel, "LDA model is empty");
  const Vector d = discriminants(x);
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < d.size(); ++k) {
    if (d[k] > d[best]) best = k;
  }
  return static_cast<int>(best);
}

LdaModel train_lda(const Matrix& X, std::span<const int> labels, int num_classes, double lambda) {
  const auto n = X.rows();
  const auto dims = X.cols();
  if (static_cast<std::size_t>(n) != labels.size()) fail(ErrorKind::DimensionError, "labels misaligned with rows");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail(ErrorKind::ConfigError, "lambda must be >= 0");
  if (num_classes < 2) fail(ErrorKind::ConfigError, "LDA needs at least two classes");

  std::vector<int> count(static_cast<std::size_t>(num_classes), 0);
  LdaModel m;
  m.lambda = lambda;
  m.class_means = Matrix::Zero(num_classes, dims);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = labels[static_cast<std::size_t>(i)];
    if (c < 0 || c >= num_classes) fail(ErrorKind::DimensionError, fmt::format("label {} out of range", c));
    ++count[static_cast<std::size_t>(c)];
    m.class_means.row(c) += X.row(i);
  }
  for (int c = 0; c < num_classes; ++c) {
    if (count[static_cast<std::size_t>(c)] < 2) {
      fail(ErrorKind::InsufficientData,
           fmt::format("class {} has {} rows; LDA needs at least 2 per class", c, count[static_cast<std::size_t>(c)]));
    }
    m.class_means.row(c) /= count[static_cast<std::size_t>(c)];
  }
  m.priors.resize(num_classes);
  for (int c = 0; c < num_classes; ++c) m.priors[c] = static_cast<double>(count[static_cast<std::size_t>(c)]) / n;

  // Within-class centred rows; Sigma = Z'Z / (N - K).
  Matrix Z = X;
  for (Eigen::Index i = 0; i < n; ++i) Z.row(i) -= m.class_means.row(labels[static_cast<std::size_t>(i)]);
  const double dof = static_cast<double>(n - num_classes);
  const Matrix means_t = m.class_means.transpose();  // D x K
  Matrix solved;                                     // D x K, (Sigma + lambda I)^-1 M'

  if (lambda == 0.0 && dims > n - num_classes) {
    fail(ErrorKind::SingularCovariance,
         fmt::format("pooled covariance is singular ({} dims, {} degrees of freedom); use lambda > 0",
                     dims, n - num_classes));
  }
  if (dims > n && lambda > 0.0) {
    // Woodbury: (lambda I + Z'Z/dof)^-1 v = (v - Z'(lambda dof I + ZZ')^-1 Z v) / lambda.
    Matrix inner = Z * Z.transpose();
    inner.diagonal().array() += lambda * dof;
    Eigen::LLT<Matrix> llt(inner);
    if (llt.info() != Eigen::Success) {
      fail(ErrorKind::SingularCovariance, "regularized system is not positive definite");
    }
    const Matrix zm = Z * means_t;
    solved = (means_t - Z.transpose() * llt.solve(zm)) / lambda;
  } else {
    Matrix cov = Z.transpose() * Z / dof;
    cov.diagonal().array() += lambda;
    Eigen::LLT<Matrix> llt(cov);
    const double floor = 1e-12 * std::max(1.0, cov.diagonal().maxCoeff());
    if (llt.info() != Eigen::Success ||
        llt.matrixL().toDenseMatrix().diagonal().minCoeff() <= std::sqrt(floor)) {
      fail(ErrorKind::SingularCovariance, "pooled covariance is singular; use lambda > 0");
    }
    solved = llt.solve(means_t);
  }
  m.coefficients = solved.transpose();
  m.offsets.resize(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    m.offsets[c] = -0.5 * m.coefficients.row(c).dot(m.class_means.row(c)) + std::log(m.priors[c]);
  }
  return m;
}

}  // namespace debris
