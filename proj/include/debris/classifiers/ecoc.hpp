#pragma once

#include <span>
#include <vector>

#include "debris/classifiers/logistic.hpp"

namespace debris {

/// K x L code matrix with entries in {-1, 0, +1}.
using CodingMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

/// One column per class pair (a, b): +1 in row a, -1 in row b, 0 elsewhere.
CodingMatrix ovo_coding(int num_classes);
/// Column k: +1 in row k, -1 elsewhere.
CodingMatrix one_vs_all_coding(int num_classes);

/// Throws CodingMatrixError unless entries are ternary, rows are distinct
/// and non-zero, and every column has at least one +1 and one -1.
void validate_coding(const CodingMatrix& coding);

struct EcocModel {
  CodingMatrix coding;
  std::vector<LogisticModel> learners;

  int num_classes() const { return static_cast<int>(coding.rows()); }
  /// Per-class mean binary log-loss over the non-zero code entries.
  Vector losses(const Eigen::Ref<const Vector>& x) const;
  /// argmin of `losses`, ties to the lowest class id.
  int predict(const Eigen::Ref<const Vector>& x) const;
};

EcocModel train_ecoc(const Matrix& X, std::span<const int> labels, const CodingMatrix& coding,
                     double reg, const LogisticOptions& options = {}, int jobs = 1);

}  // namespace debris
