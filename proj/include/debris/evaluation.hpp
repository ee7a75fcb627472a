#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "debris/classifiers/model.hpp"
#include "debris/dataset.hpp"
#include "debris/features.hpp"

namespace debris {

/// Hyperparameter name -> candidates, in declared order. Grid points are
/// enumerated with the first name varying slowest.
using HyperGrid = std::vector<std::pair<std::string, std::vector<double>>>;

struct CvPlan {
  int folds = 5;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
};

/// Fold index per label. Each class is permuted with a seed derived from
/// (seed, class) and dealt round-robin, starting where the previous class
/// stopped so total fold sizes stay balanced.
std::vector<int> stratified_kfold(std::span<const int> labels, int folds, std::uint64_t seed);

std::vector<std::map<std::string, double>> expand_grid(const HyperGrid& grid);

/// Search grid used when the config does not give one. `gamma0` scales the
/// RBF gamma candidates.
HyperGrid default_grid(Family family, double gamma0 = 1.0);

struct GridSearchResult {
  ClassifierSpec best;
  std::vector<std::map<std::string, double>> points;
  std::vector<double> mean_accuracy;  // per point
  std::size_t best_index = 0;
};

/// Rows sharing a record_id (augmented copies) always land in the same fold,
/// and only the first row of each record is scored.
GridSearchResult grid_search(const ClassifierSpec& base, const HyperGrid& grid, const FeatureMatrix& train,
                             const CvPlan& plan, const FitOptions& fit_options = {});

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;
};

struct Metrics {
  int num_classes = 0;
  long total = 0;
  long correct = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  /// counts[true][pred]
  std::vector<std::vector<long>> confusion;
  /// Row-normalized percentages in tenths (333 means 33.3%); exact integer
  /// round-half-away-from-zero.
  std::vector<std::vector<long>> row_percent_tenths;

  double row_percent(int t, int p) const { return static_cast<double>(row_percent_tenths[t][p]) / 10.0; }
};

Metrics compute_metrics(std::span<const int> y_true, std::span<const int> y_pred, int num_classes);

struct EvaluationReport {
  ClassifierSpec spec;  // with the chosen hyperparameters
  GridSearchResult search;
  Metrics test;
  std::optional<Metrics> validation;
  TrainedClassifier model;

  Family family() const { return spec.family; }
};

struct FamilySearch {
  Family family;
  HyperGrid grid;
};

/// Six families with default grids; the RBF grid is centred on the median
/// heuristic of `train_X`.
std::vector<FamilySearch> default_searches(const Matrix& train_X, std::uint64_t seed);

struct EvaluateOptions {
  std::vector<std::string> class_names;
  int num_classes = 0;
  /// Called with the rows a family is scored on, for every scoring pass.
  std::function<void(Family, Split, std::span<const std::size_t>)> on_score;
  /// Called once a family is finished.
  std::function<void(const EvaluationReport&)> on_family_done;
};

/// For each family: cross-validated grid search on the Train rows, refit on
/// all Train rows, one pass over the Test rows (and one over Validation rows
/// if any, reported for information). Sorted by test accuracy, then macro-F1
/// (both descending), then the Family declaration order.
std::vector<EvaluationReport> evaluate_all(const FeatureMatrix& features, const std::vector<FamilySearch>& searches,
                                           const CvPlan& plan, const EvaluateOptions& options = {});

void sort_reports(std::vector<EvaluationReport>& reports);

}  // namespace debris
