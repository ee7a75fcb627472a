#include "debris/classifiers/ecoc.hpp"

#include <fmt/format.h>

#include "debris/error.hpp"
#include "debris/parallel.hpp"

namespace debris {

CodingMatrix ovo_coding(int num_classes) {
  const int cols = num_classes * (num_classes - 1) / 2;
  CodingMatrix m = CodingMatrix::Zero(num_classes, cols);
  int col = 0;
  for (int a = 0; a < num_classes; ++a) {
    for (int b = a + 1; b < num_classes; ++b, ++col) {
      m(a, col) = 1;
      m(b, col) = -1;
    }
  }
  return m;
}

CodingMatrix one_vs_all_coding(int num_classes) {
  CodingMatrix m = CodingMatrix::Constant(num_classes, num_classes, -1);
  for (int k = 0; k < num_classes; ++k) m(k, k) = 1;
  return m;
}

void validate_coding(const CodingMatrix& coding) {
  if (coding.rows() < 2 || coding.cols() < 1) {
    fail(ErrorKind::CodingMatrixError,
         fmt::format("coding matrix must be at least 2x1, got {}x{}", coding.rows(), coding.cols()));
  }
  for (Eigen::Index r = 0; r < coding.rows(); ++r) {
    bool nonzero = false;
    for (Eigen::Index c = 0; c < coding.cols(); ++c) {
      const int v = coding(r, c);
      if (v < -1 || v > 1) fail(ErrorKind::CodingMatrixError, fmt::format("entry ({}, {}) = {}", r, c, v));
      nonzero |= v != 0;
    }
    if (!nonzero) fail(ErrorKind::CodingMatrixError, fmt::format("row {} has no non-zero entry", r));
    for (Eigen::Index q = 0; q < r; ++q) {
      if (coding.row(q) == coding.row(r)) {
        fail(ErrorKind::CodingMatrixError, fmt::format("rows {} and {} are identical", q, r));
      }
    }
  }
  for (Eigen::Index c = 0; c < coding.cols(); ++c) {
    if ((coding.col(c).array() == 1).count() == 0 || (coding.col(c).array() == -1).count() == 0) {
      fail(ErrorKind::CodingMatrixError, fmt::format("column {} lacks a +1 or a -1", c));
    }
  }
}

Vector EcocModel::losses(const Eigen::Ref<const Vector>& x) const {
  Vector f(static_cast<Eigen::Index>(learners.size()));
  for (std::size_t l = 0; l < learners.size(); ++l) f[static_cast<Eigen::Index>(l)] = learners[l].decision(x);
  Vector out(coding.rows());
  for (Eigen::Index k = 0; k < coding.rows(); ++k) {
    double sum = 0.0;
    int used = 0;
    for (Eigen::Index l = 0; l < coding.cols(); ++l) {
      const int m = coding(k, l);
      if (m == 0) continue;
      // -log p for +1 codes, -log(1 - p) for -1 codes, p = sigmoid(f).
      sum += softplus(-m * f[l]);
      ++used;
    }
    out[k] = sum / used;
  }
  return out;
}

int EcocModel::predict(const Eigen::Ref<const Vector>& x) const {
  const Vector l = losses(x);
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < l.size(); ++k) {
    if (l[k] < l[best]) best = k;
  }
  return static_cast<int>(best);
}

EcocModel train_ecoc(const Matrix& X, std::span<const int> labels, const CodingMatrix& coding,
                     double reg, const LogisticOptions& options, int jobs) {
  validate_coding(coding);
  for (int v : labels) {
    if (v < 0 || v >= coding.rows()) {
      fail(ErrorKind::CodingMatrixError, fmt::format("label {} has no code row", v));
    }
  }
  EcocModel model;
  model.coding = coding;
  model.learners.resize(static_cast<std::size_t>(coding.cols()));
  parallel_for(model.learners.size(), jobs, [&](std::size_t l) {
    std::vector<Eigen::Index> rows;
    std::vector<int> y;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int m = coding(labels[i], static_cast<Eigen::Index>(l));
      if (m == 0) continue;
      rows.push_back(static_cast<Eigen::Index>(i));
      y.push_back(m);
    }
    const Matrix sub = X(rows, Eigen::all);
    try {
      model.learners[l] = train_logreg_binary(sub, y, reg, options);
    } catch (const Error& e) {
      fail(e.kind(), fmt::format("ECOC column {}: {}", l, e.detail()));
    }
  });
  return model;
}

}  // namespace debris
