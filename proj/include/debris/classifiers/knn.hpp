#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "debris/types.hpp"

namespace debris {

/// Exact brute-force Euclidean nearest-neighbour classifier.
struct KnnModel {
  Matrix X;
  std::vector<int> labels;
  std::vector<std::int64_t> record_ids;
  int k = 1;
  int num_classes = 0;

  /// Neighbours are ranked by (distance, record_id); the k nearest vote and
  /// vote ties go to the lowest class id.
  int predict(const Eigen::Ref<const Vector>& x) const;
};

/// Throws EmptyModel on an empty training set, ConfigError unless 1 <= k <= N.
KnnModel knn_fit(const Matrix& X, std::span<const int> labels,
                 std::span<const std::int64_t> record_ids, int k, int num_classes);

}  // namespace debris
