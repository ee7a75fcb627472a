#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "debris/types.hpp"

namespace debris {

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  /// Class counts of the training samples that reached this node.
  std::vector<int> counts;

  bool is_leaf() const { return feature < 0; }
  /// Majority class, ties to the lowest id.
  int majority() const;
};

/// Binary CART tree; node 0 is the root. x goes left iff x[feature] <= threshold.
struct DecisionTree {
  std::vector<TreeNode> nodes;

  const TreeNode& leaf_for(const Eigen::Ref<const Vector>& x) const;
  int predict(const Eigen::Ref<const Vector>& x) const { return leaf_for(x).majority(); }
};

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double weighted_gini = std::numeric_limits<double>::infinity();

  bool valid() const { return feature >= 0; }
};

/// Gini impurity 1 - sum p_c^2 of a count vector.
double gini_impurity(std::span<const int> counts);

/// Best (feature, midpoint threshold) over all features for the given sample
/// rows (repeats allowed), minimising (n_L G_L + n_R G_R) / n subject to both
/// children holding at least `min_leaf` samples. Ties keep the lowest feature,
/// then the lowest threshold. Invalid when no admissible split exists.
SplitCandidate find_best_split(const Matrix& X, std::span<const int> labels,
                               std::span<const std::size_t> rows, int num_classes, int min_leaf = 1);

/// Grows a tree on `rows` until nodes are pure, smaller than 2 * min_leaf, or
/// unsplittable.
DecisionTree train_cart(const Matrix& X, std::span<const int> labels,
                        std::span<const std::size_t> rows, int num_classes, int min_leaf = 1);

struct BaggingOptions {
  int tree_count = 100;
  int min_leaf = 1;
  /// Test hook: train every tree on the full data instead of a bootstrap.
  bool bootstrap = true;
};

struct TreeEnsemble {
  std::vector<DecisionTree> trees;
  std::vector<std::uint64_t> bootstrap_seeds;
  int num_classes = 0;

  /// Majority vote of per-tree leaf classes, ties to the lowest class id.
  int predict(const Eigen::Ref<const Vector>& x) const;
};

/// Pure bagging: each tree sees N draws with replacement (seeded per tree from
/// (seed, tree index)) and searches every feature at every node.
TreeEnsemble train_bagged_trees(const Matrix& X, std::span<const int> labels, int num_classes,
                                const BaggingOptions& options, std::uint64_t seed, int jobs = 1);

}  // namespace debris
