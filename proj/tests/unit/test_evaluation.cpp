#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "debris/evaluation.hpp"
#include "debris/rng.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace debris;
using debris::testing::thrown_kind;

namespace {

FeatureMatrix standardized_blobs(int K, int D, int per, double sep, std::uint64_t seed) {
  auto blobs = debris::testing::make_blobs(K, D, per, sep, seed);
  debris::testing::assign_blob_splits(blobs, per);
  return apply_standardizer(fit_standardizer(blobs.select(blobs.rows_in(Split::Train))), blobs);
}

}  // namespace

// ---- folds ----

TEST_CASE("315 rows per class over five folds gives 63 per class per fold") {
  std::vector<int> labels;
  for (int c = 0; c < 4; ++c) labels.insert(labels.end(), 315, c);
  const auto folds = stratified_kfold(labels, 5, 3);
  std::map<std::pair<int, int>, int> count;
  for (std::size_t i = 0; i < labels.size(); ++i) ++count[{labels[i], folds[i]}];
  for (int c = 0; c < 4; ++c)
    for (int f = 0; f < 5; ++f) CHECK(count[{c, f}] == 63);
}

TEST_CASE("fold sizes differ by at most one per class") {
  debris::Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int K = 2 + static_cast<int>(rng.below(4));
    const int folds = 2 + static_cast<int>(rng.below(5));
    std::vector<int> labels;
    for (int c = 0; c < K; ++c) labels.insert(labels.end(), folds + rng.below(20), c);
    const auto assignment = stratified_kfold(labels, folds, trial);
    std::vector<int> total(folds, 0);
    for (int c = 0; c < K; ++c) {
      std::vector<int> per(folds, 0);
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == c) ++per[assignment[i]];
      CHECK(*std::max_element(per.begin(), per.end()) - *std::min_element(per.begin(), per.end()) <= 1);
      for (int f = 0; f < folds; ++f) total[f] += per[f];
    }
    CHECK(*std::max_element(total.begin(), total.end()) - *std::min_element(total.begin(), total.end()) <= 1);
  }
}

TEST_CASE("leave-one-out folds hold one row each") {
  const std::vector<int> labels(7, 0);
  const auto folds = stratified_kfold(labels, 7, 1);
  CHECK(std::set<int>(folds.begin(), folds.end()).size() == 7);
}

TEST_CASE("folds are deterministic and guarded") {
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c) labels.insert(labels.end(), 10, c);
  CHECK(stratified_kfold(labels, 5, 9) == stratified_kfold(labels, 5, 9));
  CHECK(stratified_kfold(labels, 5, 9) != stratified_kfold(labels, 5, 10));
  labels.push_back(3);
  CHECK(thrown_kind([&] { stratified_kfold(labels, 5, 9); }) == "ClassTooSmallForCv");
  CHECK(thrown_kind([&] { CvPlan{1, 0, 1}.validate(); }) == "ConfigError");
}

// ---- grid search ----

TEST_CASE("grid expansion varies the first name slowest") {
  const HyperGrid grid{{"C", {1, 10}}, {"gamma", {0.1, 0.2, 0.3}}};
  const auto points = expand_grid(grid);
  REQUIRE(points.size() == 6);
  CHECK(points[0].at("C") == 1);
  CHECK(points[2].at("gamma") == 0.3);
  CHECK(points[3].at("C") == 10);
  CHECK(points[3].at("gamma") == 0.1);
}

TEST_CASE("a single-point grid returns that point") {
  const auto data = standardized_blobs(3, 4, 20, 6.0, 1);
  const auto train = data.select(data.rows_in(Split::Train));
  const auto r = grid_search(ClassifierSpec{Family::LinearSvmOvo, {}, 0}, {{"C", {3.0}}}, train, CvPlan{5, 1, 1});
  CHECK(r.best.get("C") == 3.0);
  CHECK(r.points.size() == 1);
  CHECK(r.best_index == 0);
}

TEST_CASE("the point with perfect folds beats a coin-flip one") {
  // k = 1 is perfect on well separated blobs. With k equal to the whole
  // training fold (21 + 21 rows) every vote ties and goes to class 0, so
  // that point scores exactly one half.
  const auto data = standardized_blobs(2, 4, 40, 8.0, 2);
  const auto train = data.select(data.rows_in(Split::Train));
  const auto r = grid_search(ClassifierSpec{Family::Knn, {}, 0}, {{"k", {42.0, 1.0}}}, train, CvPlan{4, 2, 1});
  CHECK(r.mean_accuracy[1] == 1.0);
  CHECK(r.mean_accuracy[0] == 0.5);
  CHECK(r.best.get("k") == 1.0);
}

TEST_CASE("tied grid points keep the first in iteration order") {
  const auto data = standardized_blobs(3, 4, 20, 10.0, 3);
  const auto train = data.select(data.rows_in(Split::Train));
  const auto r =
      grid_search(ClassifierSpec{Family::Lda, {}, 0}, {{"lambda", {0.5, 0.1, 0.01}}}, train, CvPlan{3, 4, 1});
  CHECK(r.mean_accuracy[0] == r.mean_accuracy[1]);
  CHECK(r.best_index == 0);
  CHECK(r.best.get("lambda") == 0.5);
}

TEST_CASE("augmented copies stay in their source record's fold") {
  auto data = standardized_blobs(2, 3, 20, 6.0, 5);
  auto train = data.select(data.rows_in(Split::Train));
  // Duplicate each train row as a copy sharing its record id. If copies
  // leaked across folds, 1-NN would score a perfect 1.0 on flipped labels.
  const auto n = train.rows();
  FeatureMatrix aug = train;
  aug.X.conservativeResize(2 * static_cast<Eigen::Index>(n), Eigen::NoChange);
  for (std::size_t i = 0; i < n; ++i) {
    aug.X.row(static_cast<Eigen::Index>(n + i)) = train.X.row(static_cast<Eigen::Index>(i));
    aug.labels.push_back(train.labels[i]);
    aug.record_ids.push_back(train.record_ids[i]);
    aug.splits.push_back(Split::Train);
  }
  debris::Rng rng(6);
  std::vector<int> shuffled(aug.labels.begin(), aug.labels.begin() + static_cast<long>(n));
  rng.shuffle(std::span<int>(shuffled));
  for (std::size_t i = 0; i < n; ++i) aug.labels[i] = aug.labels[n + i] = shuffled[i];
  const auto r = grid_search(ClassifierSpec{Family::Knn, {}, 0}, {{"k", {1.0}}}, aug, CvPlan{4, 7, 1});
  CHECK(r.mean_accuracy[0] < 0.9);
}

TEST_CASE("grid point errors name the point") {
  const auto data = standardized_blobs(2, 3, 10, 6.0, 8);
  const auto train = data.select(data.rows_in(Split::Train));
  try {
    grid_search(ClassifierSpec{Family::Lda, {}, 0}, {{"lambda", {0.1, -1.0}}}, train, CvPlan{3, 1, 1});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("lambda=-1") != std::string::npos);
  }
}

// ---- metrics ----

TEST_CASE("metrics match an independent counting oracle") {
  debris::Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const int K = 2 + static_cast<int>(rng.below(5));
    const int n = 1 + static_cast<int>(rng.below(60));
    std::vector<int> t(n), p(n);
    for (int i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng.below(K));
      p[i] = rng.bernoulli(0.6) ? t[i] : static_cast<int>(rng.below(K));
    }
    const auto m = compute_metrics(t, p, K);
    const auto o = debris::testing::counting_metrics(t, p, K);
    CAPTURE(trial);
    REQUIRE(m.confusion == o.confusion);
    CHECK(m.correct == o.correct);
    CHECK(m.total == n);
    CHECK(m.accuracy == static_cast<double>(o.correct) / n);
    for (int c = 0; c < K; ++c) {
      CHECK(m.per_class[c].precision == o.precision[c]);
      CHECK(m.per_class[c].recall == o.recall[c]);
      CHECK(m.per_class[c].f1 == o.f1[c]);
    }
    CHECK(m.macro_f1 == doctest::Approx(o.macro_f1).epsilon(1e-15));
    long sum = 0, trace = 0;
    for (int a = 0; a < K; ++a)
      for (int b = 0; b < K; ++b) {
        sum += m.confusion[a][b];
        if (a == b) trace += m.confusion[a][b];
      }
    CHECK(sum == n);
    CHECK(static_cast<double>(trace) / n == m.accuracy);
  }
}

TEST_CASE("twelve-sample fixture with one wood sample called ceramic") {
  // Classes: 0 Ceramic, 1 Glass, 2 Metal, 3 Wood.
  const std::vector<int> t{0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3};
  std::vector<int> p = t;
  p[9] = 0;
  const auto m = compute_metrics(t, p, 4);
  CHECK(m.correct == 11);
  CHECK(m.accuracy == doctest::Approx(11.0 / 12.0));
  CHECK(m.row_percent_tenths[3] == std::vector<long>{333, 0, 0, 667});
  CHECK(m.row_percent(3, 0) == doctest::Approx(33.3));
  // Ceramic: P = 3/4, R = 1 -> F1 = 6/7. Wood: P = 1, R = 2/3 -> F1 = 4/5.
  CHECK(m.per_class[0].f1 == doctest::Approx(6.0 / 7.0));
  CHECK(m.per_class[3].f1 == doctest::Approx(0.8));
  CHECK(m.macro_f1 == doctest::Approx((6.0 / 7.0 + 1.0 + 1.0 + 0.8) / 4.0));
}

TEST_CASE("perfect balanced predictions") {
  std::vector<int> t;
  for (int c = 0; c < 4; ++c) t.insert(t.end(), 5, c);
  const auto m = compute_metrics(t, t, 4);
  CHECK(m.accuracy == 1.0);
  CHECK(m.macro_f1 == 1.0);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) CHECK(m.confusion[a][b] == (a == b ? 5 : 0));
}

TEST_CASE("row percentages round half away from zero") {
  // 1/8 = 12.5% exactly; 1/16 = 6.25% -> 6.3; 1/6 = 16.666.. -> 16.7.
  std::vector<int> t(16, 0), p(16, 0);
  p[0] = 1;
  CHECK(compute_metrics(t, p, 2).row_percent_tenths[0][1] == 63);
  std::vector<int> t6(6, 0), p6(6, 0);
  p6[0] = 1;
  CHECK(compute_metrics(t6, p6, 2).row_percent_tenths[0][1] == 167);
  std::vector<int> t8(8, 0), p8(8, 0);
  p8[0] = 1;
  CHECK(compute_metrics(t8, p8, 2).row_percent_tenths[0][1] == 125);
}

TEST_CASE("metric guards") {
  const std::vector<int> a{0, 1}, b{0};
  CHECK(thrown_kind([&] { compute_metrics(a, b, 2); }) == "DimensionError");
  CHECK(thrown_kind([&] { compute_metrics(std::vector<int>{}, std::vector<int>{}, 2); }) == "DimensionError");
  CHECK(thrown_kind([&] { compute_metrics(std::vector<int>{0, 2}, std::vector<int>{0, 1}, 2); }) ==
        "DimensionError");
}

// ---- evaluate_all ----

TEST_CASE("test rows are scored exactly once per family, after selection") {
  const auto data = standardized_blobs(3, 6, 30, 6.0, 10);
  auto searches = default_searches(data.select(data.rows_in(Split::Train)).X, 1);
  for (auto& s : searches)
    if (s.family == Family::BaggedTrees) s.grid = {{"tree_count", {5}}, {"min_leaf", {1}}};

  std::map<Family, std::vector<Split>> log;
  EvaluateOptions opts;
  opts.on_score = [&](Family f, Split s, std::span<const std::size_t> rows) {
    log[f].push_back(s);
    for (auto r : rows) CHECK(data.splits[r] == s);
  };
  const auto reports = evaluate_all(data, searches, CvPlan{3, 1, 1}, opts);
  REQUIRE(reports.size() == 6);
  for (Family f : kAllFamilies) {
    CHECK(log[f] == std::vector<Split>{Split::Train, Split::Test, Split::Validation});
  }
}

TEST_CASE("test-row contents cannot influence selection or training") {
  auto data = standardized_blobs(3, 6, 30, 6.0, 11);
  std::vector<FamilySearch> searches{{Family::Lda, default_grid(Family::Lda)},
                                     {Family::LinearSvmOvo, default_grid(Family::LinearSvmOvo)}};
  const auto a = evaluate_all(data, searches, CvPlan{3, 1, 1});
  for (auto r : data.rows_in(Split::Test)) {
    data.X.row(static_cast<Eigen::Index>(r)) *= -5.0;
    data.labels[r] = (data.labels[r] + 1) % 3;
  }
  const auto b = evaluate_all(data, searches, CvPlan{3, 1, 1});
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& ra = *std::find_if(a.begin(), a.end(), [&](auto& r) { return r.family() == searches[i].family; });
    const auto& rb = *std::find_if(b.begin(), b.end(), [&](auto& r) { return r.family() == searches[i].family; });
    CHECK(ra.spec == rb.spec);
    CHECK(serialize_model(ra.model) == serialize_model(rb.model));
  }
}

TEST_CASE("an empty test split fails before any training") {
  auto data = standardized_blobs(2, 3, 10, 6.0, 12);
  for (auto& s : data.splits)
    if (s == Split::Test) s = Split::Validation;
  int calls = 0;
  EvaluateOptions opts;
  opts.on_score = [&](Family, Split, std::span<const std::size_t>) { ++calls; };
  CHECK(thrown_kind([&] {
          evaluate_all(data, {{Family::Lda, default_grid(Family::Lda)}}, CvPlan{3, 1, 1}, opts);
        }) == "DimensionError");
  CHECK(calls == 0);
}

TEST_CASE("reports sort by accuracy, then macro-F1, then family order") {
  auto make = [](Family f, double acc, double f1) {
    EvaluationReport r;
    r.spec.family = f;
    r.test.accuracy = acc;
    r.test.macro_f1 = f1;
    return r;
  };
  std::vector<EvaluationReport> rs{make(Family::Lda, 0.9, 0.9), make(Family::Knn, 0.95, 0.95),
                                   make(Family::BaggedTrees, 0.95, 0.95), make(Family::RbfSvmOvo, 0.95, 0.96),
                                   make(Family::LinearSvmOvo, 0.95, 0.95)};
  sort_reports(rs);
  std::vector<Family> order;
  for (auto& r : rs) order.push_back(r.family());
  CHECK(order == std::vector<Family>{Family::RbfSvmOvo, Family::LinearSvmOvo, Family::BaggedTrees, Family::Knn,
                                     Family::Lda});
}

TEST_CASE("family errors carry the family key") {
  const auto data = standardized_blobs(2, 3, 10, 6.0, 13);
  try {
    evaluate_all(data, {{Family::Lda, {{"lambda", {-1.0}}}}}, CvPlan{3, 1, 1});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("lda") != std::string::npos);
  }
}
