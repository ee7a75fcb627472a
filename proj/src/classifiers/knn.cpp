#include "debris/classifiers/knn.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

#include "debris/error.hpp"

namespace debris {

KnnModel knn_fit(const Matrix& X, std::span<const int> labels,
                 std::span<const std::int64_t> record_ids, int k, int num_classes) {
  if (X.rows() == 0) fail(ErrorKind::EmptyModel, "kNN needs at least one training row");
  if (labels.size() != static_cast<std::size_t>(X.rows()) || record_ids.size() != labels.size()) {
    fail(ErrorKind::DimensionError, "kNN labels/record ids misaligned with rows");
  }
  if (k < 1 || k > X.rows()) {
    fail(ErrorKind::ConfigError, fmt::format("k = {} outside [1, {}]", k, X.rows()));
  }
  return KnnModel{X, {labels.begin(), labels.end()}, {record_ids.begin(), record_ids.end()}, k,
                  num_classes};
}

int KnnModel::predict(const Eigen::Ref<const Vector>& x) const {
  if (X.rows() == 0) fail(ErrorKind::EmptyModel, "kNN model has no stored rows");
  const auto n = static_cast<std::size_t>(X.rows());
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    dist[i] = (X.row(static_cast<Eigen::Index>(i)).transpose() - x).squaredNorm();
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto closer = [&](std::size_t a, std::size_t b) {
    return dist[a] != dist[b] ? dist[a] < dist[b] : record_ids[a] < record_ids[b];
  };
  const auto kk = static_cast<std::size_t>(k);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(), closer);
  if (kk == 1) return labels[order[0]];
  std::vector<int> votes(static_cast<std::size_t>(std::max(num_classes, 1)), 0);
  for (std::size_t i = 0; i < kk; ++i) {
    const auto label = static_cast<std::size_t>(labels[order[i]]);
    if (label >= votes.size()) votes.resize(label + 1, 0);
    ++votes[label];
  }
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

}  // namespace debris
