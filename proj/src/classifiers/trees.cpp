#include "debris/classifiers/trees.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

#include "debris/error.hpp"
#include "debris/parallel.hpp"
#include "debris/rng.hpp"

namespace debris {

int TreeNode::majority() const {
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

const TreeNode& DecisionTree::leaf_for(const Eigen::Ref<const Vector>& x) const {
  if (nodes.empty()) fail(ErrorKind::EmptyModel, "decision tree has no nodes");
  const TreeNode* node = &nodes.front();
  while (!node->is_leaf()) {
    node = &nodes[static_cast<std::size_t>(x[node->feature] <= node->threshold ? node->left : node->right)];
  }
  return *node;
}

double gini_impurity(std::span<const int> counts) {
  const double n = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (n == 0) return 0.0;
  double sq = 0.0;
  for (int c : counts) sq += (c / n) * (c / n);
  return 1.0 - sq;
}

namespace {

double midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid < hi ? mid : lo;
}

// Scans one feature whose samples are already sorted by value. The split
// score sum_c L_c^2/n_L + sum_c R_c^2/n_R is maximised, which is the same as
// minimising weighted Gini = (n - score) / n. Integer sums keep the score
// bit-identical between the standalone and presorted paths.
struct Scan {
  std::vector<long long> left, right;

  void scan(int feature, std::span<const std::size_t> sorted_rows, const Matrix& X,
            std::span<const int> labels, std::span<const int> total, int min_leaf, double& best_score,
            SplitCandidate& best) {
    left.assign(total.size(), 0);
    right.assign(total.begin(), total.end());
    const auto n = static_cast<long long>(sorted_rows.size());
    long long sl = 0, sr = 0;
    for (long long c : right) sr += c * c;
    for (long long i = 0; i + 1 < n; ++i) {
      const auto row = sorted_rows[static_cast<std::size_t>(i)];
      const auto c = static_cast<std::size_t>(labels[row]);
      sl += 2 * left[c] + 1;
      sr -= 2 * right[c] - 1;
      ++left[c];
      --right[c];
      const long long nl = i + 1, nr = n - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double a = X(static_cast<Eigen::Index>(row), feature);
      const double b = X(static_cast<Eigen::Index>(sorted_rows[static_cast<std::size_t>(i + 1)]), feature);
      if (!(a < b)) continue;
      const double score = static_cast<double>(sl) / static_cast<double>(nl) +
                           static_cast<double>(sr) / static_cast<double>(nr);
      if (score > best_score) {
        best_score = score;
        best.feature = feature;
        best.threshold = midpoint(a, b);
        best.weighted_gini = (static_cast<double>(n) - score) / static_cast<double>(n);
      }
    }
  }
};

std::vector<int> count_classes(std::span<const int> labels, std::span<const std::size_t> rows, int k) {
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (auto r : rows) {
    const int l = labels[r];
    if (l < 0 || l >= k) fail(ErrorKind::DimensionError, fmt::format("label {} outside [0, {})", l, k));
    ++counts[static_cast<std::size_t>(l)];
  }
  return counts;
}

}  // namespace

SplitCandidate find_best_split(const Matrix& X, std::span<const int> labels,
                               std::span<const std::size_t> rows, int num_classes, int min_leaf) {
  const auto total = count_classes(labels, rows, num_classes);
  SplitCandidate best;
  double best_score = -1.0;
  Scan scan;
  std::vector<std::size_t> sorted(rows.begin(), rows.end());
  for (int f = 0; f < X.cols(); ++f) {
    std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
      return X(static_cast<Eigen::Index>(a), f) < X(static_cast<Eigen::Index>(b), f);
    });
    scan.scan(f, sorted, X, labels, total, min_leaf, best_score, best);
  }
  return best;
}

DecisionTree train_cart(const Matrix& X, std::span<const int> labels,
                        std::span<const std::size_t> rows, int num_classes, int min_leaf) {
  if (rows.empty()) fail(ErrorKind::InsufficientData, "cannot grow a tree on zero samples");
  if (min_leaf < 1) fail(ErrorKind::ConfigError, "min_leaf must be >= 1");
  const auto m = rows.size();
  const auto d = static_cast<std::size_t>(X.cols());

  // order[f * m + p]: the p-th sample (index into rows) of the current node
  // range, sorted by feature f. Each node owns the same [lo, hi) range in
  // every feature's segment.
  std::vector<std::uint32_t> order(d * m);
  for (std::size_t f = 0; f < d; ++f) {
    auto* seg = &order[f * m];
    std::iota(seg, seg + m, 0u);
    std::stable_sort(seg, seg + m, [&](std::uint32_t a, std::uint32_t b) {
      return X(static_cast<Eigen::Index>(rows[a]), static_cast<Eigen::Index>(f)) <
             X(static_cast<Eigen::Index>(rows[b]), static_cast<Eigen::Index>(f));
    });
  }
  std::vector<int> sample_labels(m);
  for (std::size_t p = 0; p < m; ++p) sample_labels[p] = labels[rows[p]];

  DecisionTree tree;
  struct Work {
    int node;
    std::size_t lo, hi;
  };
  std::vector<Work> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, 0, m});
  std::vector<std::uint8_t> goes_left(m);
  std::vector<std::uint32_t> buffer(m);
  std::vector<std::size_t> node_rows;
  Scan scan;

  while (!stack.empty()) {
    const Work w = stack.back();
    stack.pop_back();
    const std::span<const std::uint32_t> any_seg(&order[w.lo], w.hi - w.lo);
    std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
    for (auto s : any_seg) ++counts[static_cast<std::size_t>(sample_labels[s])];
    tree.nodes[static_cast<std::size_t>(w.node)].counts = counts;

    const auto n = w.hi - w.lo;
    const bool pure = std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }) <= 1;
    if (pure || n < 2 * static_cast<std::size_t>(min_leaf)) continue;

    SplitCandidate best;
    double best_score = -1.0;
    for (std::size_t f = 0; f < d; ++f) {
      node_rows.clear();
      for (std::size_t p = w.lo; p < w.hi; ++p) node_rows.push_back(rows[order[f * m + p]]);
      scan.scan(static_cast<int>(f), node_rows, X, labels, counts, min_leaf, best_score, best);
    }
    if (!best.valid()) continue;

    const auto bf = static_cast<std::size_t>(best.feature);
    std::size_t n_left = 0;
    for (std::size_t p = w.lo; p < w.hi; ++p) {
      const auto s = order[bf * m + p];
      goes_left[s] = X(static_cast<Eigen::Index>(rows[s]), best.feature) <= best.threshold;
      n_left += goes_left[s];
    }
    for (std::size_t f = 0; f < d; ++f) {
      auto* seg = &order[f * m];
      std::size_t l = w.lo, r = 0;
      for (std::size_t p = w.lo; p < w.hi; ++p) {
        const auto s = seg[p];
        if (goes_left[s]) seg[l++] = s;
        else buffer[r++] = s;
      }
      std::copy(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(r), seg + l);
    }

    const int left = static_cast<int>(tree.nodes.size());
    const int right = left + 1;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& node = tree.nodes[static_cast<std::size_t>(w.node)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = left;
    node.right = right;
    // Right first so the left subtree is expanded first.
    stack.push_back({right, w.lo + n_left, w.hi});
    stack.push_back({left, w.lo, w.lo + n_left});
  }
  return tree;
}

int TreeEnsemble::predict(const Eigen::Ref<const Vector>& x) const {
  if (trees.empty()) fail(ErrorKind::EmptyModel, "tree ensemble is empty");
  std::vector<int> votes(static_cast<std::size_t>(num_classes), 0);
  for (const auto& t : trees) ++votes.at(static_cast<std::size_t>(t.predict(x)));
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

TreeEnsemble train_bagged_trees(const Matrix& X, std::span<const int> labels, int num_classes,
                                const BaggingOptions& options, std::uint64_t seed, int jobs) {
  if (options.tree_count < 1) {
    fail(ErrorKind::ConfigError, fmt::format("tree_count must be >= 1, got {}", options.tree_count));
  }
  if (options.min_leaf < 1) fail(ErrorKind::ConfigError, "min_leaf must be >= 1");
  const auto n = static_cast<std::size_t>(X.rows());
  if (n < 2) fail(ErrorKind::InsufficientData, "bagging needs at least 2 rows");
  if (labels.size() != n) fail(ErrorKind::DimensionError, "labels misaligned with rows");

  TreeEnsemble ens;
  ens.num_classes = num_classes;
  ens.trees.resize(static_cast<std::size_t>(options.tree_count));
  ens.bootstrap_seeds.resize(ens.trees.size());
  for (std::size_t t = 0; t < ens.trees.size(); ++t) ens.bootstrap_seeds[t] = derive_seed(seed, t);
  parallel_for(ens.trees.size(), jobs, [&](std::size_t t) {
    std::vector<std::size_t> sample(n);
    if (options.bootstrap) {
      Rng rng(ens.bootstrap_seeds[t]);
      for (auto& s : sample) s = static_cast<std::size_t>(rng.below(n));
    } else {
      std::iota(sample.begin(), sample.end(), std::size_t{0});
    }
    ens.trees[t] = train_cart(X, labels, sample, num_classes, options.min_leaf);
  });
  return ens;
}

}  // namespace debris
