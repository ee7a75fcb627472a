#include "debris/evaluation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>
#include <unordered_map>

#include "debris/error.hpp"
#include "debris/parallel.hpp"
#include "debris/rng.hpp"

namespace debris {

void CvPlan::validate() const {
  if (folds < 2) fail(ErrorKind::ConfigError, fmt::format("cross-validation needs at least 2 folds, got {}", folds));
  if (jobs < 1) fail(ErrorKind::ConfigError, "jobs must be at least 1");
}

std::vector<int> stratified_kfold(std::span<const int> labels, int folds, std::uint64_t seed) {
  if (folds < 1) fail(ErrorKind::ConfigError, "folds must be positive");
  const int k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(std::max(k, 0)));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) fail(ErrorKind::DimensionError, "negative label");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  std::vector<int> fold(labels.size(), -1);
  std::size_t offset = 0;
  for (int c = 0; c < k; ++c) {
    auto& rows = by_class[static_cast<std::size_t>(c)];
    if (rows.empty()) continue;
    if (rows.size() < static_cast<std::size_t>(folds)) {
      fail(ErrorKind::ClassTooSmallForCv,
           fmt::format("class {} has {} rows, fewer than {} folds", c, rows.size(), folds));
    }
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    rng.shuffle(std::span(rows));
    for (std::size_t j = 0; j < rows.size(); ++j) {
      fold[rows[j]] = static_cast<int>((offset + j) % static_cast<std::size_t>(folds));
    }
    offset += rows.size();
  }
  return fold;
}

std::vector<std::map<std::string, double>> expand_grid(const HyperGrid& grid) {
  std::vector<std::map<std::string, double>> points{{}};
  for (const auto& [name, values] : grid) {
    if (values.empty()) fail(ErrorKind::ConfigError, fmt::format("grid for '{}' is empty", name));
    std::vector<std::map<std::string, double>> next;
    for (const auto& p : points) {
      for (double v : values) {
        auto q = p;
        q[name] = v;
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }
  return points;
}

HyperGrid default_grid(Family family, double gamma0) {
  switch (family) {
    case Family::LinearSvmOvo: return {{"C", {0.1, 1, 10, 100}}};
    case Family::RbfSvmOvo: return {{"C", {0.1, 1, 10, 100}}, {"gamma", {0.1 * gamma0, gamma0, 10 * gamma0}}};
    case Family::LogRegEcoc: return {{"reg", {1e-4, 1e-3, 1e-2, 1e-1}}};
    case Family::Knn: return {{"k", {1}}};
    case Family::BaggedTrees: return {{"tree_count", {100}}, {"min_leaf", {1}}};
    case Family::Lda: return {{"lambda", {1e-4, 1e-3, 1e-2, 1e-1, 1}}};
  }
  return {};
}

std::vector<FamilySearch> default_searches(const Matrix& train_X, std::uint64_t seed) {
  const double gamma0 = median_heuristic_gamma(train_X, seed);
  std::vector<FamilySearch> out;
  for (Family f : kAllFamilies) out.push_back({f, default_grid(f, gamma0)});
  return out;
}

namespace {

std::vector<int> predict_rows(const TrainedClassifier& model, const FeatureMatrix& features,
                              std::span<const std::size_t> rows) {
  std::vector<int> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out[i] = predict_one(model, features.X.row(static_cast<Eigen::Index>(rows[i])).transpose());
  }
  return out;
}

[[noreturn]] void rethrow_with(const Error& e, const std::string& context) {
  throw Error(e.kind(), fmt::format("{}: {}", context, e.detail()));
}

}  // namespace

GridSearchResult grid_search(const ClassifierSpec& base, const HyperGrid& grid, const FeatureMatrix& train,
                             const CvPlan& plan, const FitOptions& fit_options) {
  plan.validate();
  if (grid.empty()) fail(ErrorKind::ConfigError, fmt::format("empty grid for {}", family_key(base.family)));
  if (train.labels.size() != train.rows()) fail(ErrorKind::DimensionError, "grid search needs labeled rows");

  // Group rows by source record so augmented copies never straddle folds.
  std::vector<std::size_t> group_of(train.rows());
  std::vector<std::size_t> group_first;
  std::vector<int> group_label;
  if (train.record_ids.size() == train.rows()) {
    std::unordered_map<std::int64_t, std::size_t> index;
    for (std::size_t i = 0; i < train.rows(); ++i) {
      auto [it, inserted] = index.try_emplace(train.record_ids[i], group_first.size());
      if (inserted) {
        group_first.push_back(i);
        group_label.push_back(train.labels[i]);
      } else if (group_label[it->second] != train.labels[i]) {
        fail(ErrorKind::DimensionError, fmt::format("record {} carries two labels", train.record_ids[i]));
      }
      group_of[i] = it->second;
    }
  } else {
    for (std::size_t i = 0; i < train.rows(); ++i) {
      group_of[i] = i;
      group_first.push_back(i);
      group_label.push_back(train.labels[i]);
    }
  }
  const auto group_fold = stratified_kfold(group_label, plan.folds, plan.seed);

  const auto folds = static_cast<std::size_t>(plan.folds);
  std::vector<std::vector<std::size_t>> fit_rows(folds), score_rows(folds);
  for (std::size_t i = 0; i < train.rows(); ++i) {
    const auto f = static_cast<std::size_t>(group_fold[group_of[i]]);
    for (std::size_t g = 0; g < folds; ++g) {
      if (g != f) fit_rows[g].push_back(i);
    }
    if (group_first[group_of[i]] == i) score_rows[f].push_back(i);
  }

  GridSearchResult result;
  result.points = expand_grid(grid);
  FitOptions inner = fit_options;
  inner.jobs = 1;
  if (inner.num_classes == 0) {
    inner.num_classes = *std::max_element(train.labels.begin(), train.labels.end()) + 1;
  }

  std::vector<double> fold_accuracy(result.points.size() * folds);
  parallel_for(fold_accuracy.size(), plan.jobs, [&](std::size_t task) {
    const auto p = task / folds;
    const auto f = task % folds;
    ClassifierSpec spec = base;
    for (const auto& [name, value] : result.points[p]) spec.hyperparameters[name] = value;
    try {
      const auto model = fit(spec, train.select(fit_rows[f]), inner);
      const auto pred = predict_rows(model, train, score_rows[f]);
      long correct = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == train.labels[score_rows[f][i]];
      fold_accuracy[task] = static_cast<double>(correct) / static_cast<double>(pred.size());
    } catch (const Error& e) {
      rethrow_with(e, fmt::format("grid point {{{}}} fold {}", spec.describe(), f));
    }
  });

  result.mean_accuracy.resize(result.points.size());
  for (std::size_t p = 0; p < result.points.size(); ++p) {
    double sum = 0.0;
    for (std::size_t f = 0; f < folds; ++f) sum += fold_accuracy[p * folds + f];
    result.mean_accuracy[p] = sum / static_cast<double>(folds);
    if (result.mean_accuracy[p] > result.mean_accuracy[result.best_index]) result.best_index = p;
  }
  result.best = base;
  for (const auto& [name, value] : result.points[result.best_index]) result.best.hyperparameters[name] = value;
  return result;
}

Metrics compute_metrics(std::span<const int> y_true, std::span<const int> y_pred, int num_classes) {
  if (y_true.size() != y_pred.size()) {
    fail(ErrorKind::DimensionError,
         fmt::format("{} true labels vs {} predictions", y_true.size(), y_pred.size()));
  }
  if (y_true.empty()) fail(ErrorKind::DimensionError, "metrics need at least one sample");
  if (num_classes < 1) fail(ErrorKind::DimensionError, "num_classes must be positive");
  const auto k = static_cast<std::size_t>(num_classes);

  Metrics m;
  m.num_classes = num_classes;
  m.total = static_cast<long>(y_true.size());
  m.confusion.assign(k, std::vector<long>(k, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= num_classes || y_pred[i] < 0 || y_pred[i] >= num_classes) {
      fail(ErrorKind::DimensionError, fmt::format("label out of range at position {}", i));
    }
    ++m.confusion[static_cast<std::size_t>(y_true[i])][static_cast<std::size_t>(y_pred[i])];
  }

  m.per_class.resize(k);
  m.row_percent_tenths.assign(k, std::vector<long>(k, 0));
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const long tp = m.confusion[c][c];
    long row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += m.confusion[c][j];
      col += m.confusion[j][c];
    }
    m.correct += tp;
    auto& pc = m.per_class[c];
    pc.support = row;
    pc.precision = col > 0 ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    pc.recall = row > 0 ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    const double denom = pc.precision + pc.recall;
    pc.f1 = denom > 0 ? 2.0 * pc.precision * pc.recall / denom : 0.0;
    f1_sum += pc.f1;
    if (row > 0) {
      for (std::size_t j = 0; j < k; ++j) {
        m.row_percent_tenths[c][j] = (2000 * m.confusion[c][j] + row) / (2 * row);
      }
    }
  }
  m.accuracy = static_cast<double>(m.correct) / static_cast<double>(m.total);
  m.macro_f1 = f1_sum / static_cast<double>(k);
  return m;
}

void sort_reports(std::vector<EvaluationReport>& reports) {
  std::stable_sort(reports.begin(), reports.end(), [](const EvaluationReport& a, const EvaluationReport& b) {
    if (a.test.accuracy != b.test.accuracy) return a.test.accuracy > b.test.accuracy;
    if (a.test.macro_f1 != b.test.macro_f1) return a.test.macro_f1 > b.test.macro_f1;
    return a.family() < b.family();
  });
}

std::vector<EvaluationReport> evaluate_all(const FeatureMatrix& features, const std::vector<FamilySearch>& searches,
                                           const CvPlan& plan, const EvaluateOptions& options) {
  plan.validate();
  features.validate();
  if (features.splits.size() != features.rows() || features.labels.size() != features.rows()) {
    fail(ErrorKind::DimensionError, "evaluation needs labeled rows with split tags");
  }
  const auto train_rows = features.rows_in(Split::Train);
  const auto val_rows = features.rows_in(Split::Validation);
  const auto test_rows = features.rows_in(Split::Test);
  if (test_rows.empty()) fail(ErrorKind::DimensionError, "the test split is empty");
  if (train_rows.empty()) fail(ErrorKind::DimensionError, "the train split is empty");

  int k = options.num_classes;
  if (k == 0) k = *std::max_element(features.labels.begin(), features.labels.end()) + 1;
  FitOptions fit_options;
  fit_options.num_classes = k;
  fit_options.class_names = options.class_names;
  fit_options.jobs = plan.jobs;

  const FeatureMatrix train = features.select(train_rows);
  auto labels_of = [&](std::span<const std::size_t> rows) {
    std::vector<int> y;
    y.reserve(rows.size());
    for (auto r : rows) y.push_back(features.labels[r]);
    return y;
  };

  std::vector<EvaluationReport> reports;
  for (const auto& search : searches) {
    try {
      EvaluationReport report;
      if (options.on_score) options.on_score(search.family, Split::Train, train_rows);
      report.search = grid_search(ClassifierSpec{search.family, {}, plan.seed}, search.grid, train, plan, fit_options);
      report.spec = report.search.best;
      report.model = fit(report.spec, train, fit_options);
      report.spec = report.model.spec;

      if (options.on_score) options.on_score(search.family, Split::Test, test_rows);
      report.test = compute_metrics(labels_of(test_rows), predict_rows(report.model, features, test_rows), k);
      if (!val_rows.empty()) {
        if (options.on_score) options.on_score(search.family, Split::Validation, val_rows);
        report.validation =
            compute_metrics(labels_of(val_rows), predict_rows(report.model, features, val_rows), k);
      }
      if (options.on_family_done) options.on_family_done(report);
      reports.push_back(std::move(report));
    } catch (const Error& e) {
      rethrow_with(e, std::string(family_key(search.family)));
    }
  }
  sort_reports(reports);
  return reports;
}

}  // namespace debris
