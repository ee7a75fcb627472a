#pragma once

#include <fmt/format.h>

#include <span>
#include <utility>
#include <vector>

#include "debris/error.hpp"
#include "debris/parallel.hpp"
#include "debris/types.hpp"

namespace debris {

/// (0,1), (0,2), ..., (K-2,K-1).
std::vector<std::pair<int, int>> ovo_pairs(int num_classes);

/// Pairwise winners: decision > 0 credits pair.first, otherwise pair.second.
/// The returned win counts always sum to the number of pairs.
std::vector<int> ovo_wins(int num_classes, std::span<const std::pair<int, int>> pairs,
                          std::span<const double> decisions);

/// Majority vote. Ties go to the tied class with the largest summed |f| over
/// the contests it won, then to the lowest class id.
int ovo_vote(int num_classes, std::span<const std::pair<int, int>> pairs,
             std::span<const double> decisions);

template <typename Model>
struct OvoModel {
  int num_classes = 0;
  std::vector<Model> models;  // one per ovo_pairs(num_classes) entry

  int predict(const Eigen::Ref<const Vector>& x) const {
    std::vector<std::pair<int, int>> pairs;
    std::vector<double> decisions;
    for (const auto& m : models) {
      pairs.push_back(m.class_pair);
      decisions.push_back(m.decision(x));
    }
    return ovo_vote(num_classes, pairs, decisions);
  }
};

/// Trains one binary model per class pair on the rows of those two classes.
/// `trainer(X_pair, y_pair, pair_index)` receives labels +1 (pair.first) and
/// -1 (pair.second). Errors are re-raised with the pair attached.
template <typename Model, typename Trainer>
OvoModel<Model> train_ovo(Trainer&& trainer, const Matrix& X, std::span<const int> labels,
                          int num_classes, int jobs = 1) {
  if (num_classes < 2) fail(ErrorKind::ConfigError, "one-vs-one needs at least two classes");
  const auto pairs = ovo_pairs(num_classes);
  OvoModel<Model> out;
  out.num_classes = num_classes;
  out.models.resize(pairs.size());
  parallel_for(pairs.size(), jobs, [&](std::size_t p) {
    const auto [a, b] = pairs[p];
    std::vector<Eigen::Index> rows;
    std::vector<int> y;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == a || labels[i] == b) {
        rows.push_back(static_cast<Eigen::Index>(i));
        y.push_back(labels[i] == a ? 1 : -1);
      }
    }
    Matrix sub = X(rows, Eigen::all);
    try {
      Model m = trainer(sub, std::span<const int>(y), p);
      m.class_pair = pairs[p];
      out.models[p] = std::move(m);
    } catch (const Error& e) {
      fail(e.kind(), fmt::format("class pair ({}, {}): {}", a, b, e.detail()));
    }
  });
  return out;
}

}  // namespace debris
