#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "debris/classifiers/ecoc.hpp"
#include "debris/classifiers/knn.hpp"
#include "debris/classifiers/lda.hpp"
#include "debris/classifiers/ovo.hpp"
#include "debris/classifiers/svm.hpp"
#include "debris/classifiers/trees.hpp"
#include "debris/features.hpp"

namespace debris {

/// Declaration order is the canonical reporting order and the final
/// tie-break when sorting results.
enum class Family : std::uint8_t { LinearSvmOvo, BaggedTrees, Knn, LogRegEcoc, RbfSvmOvo, Lda };

inline constexpr std::array<Family, 6> kAllFamilies = {Family::LinearSvmOvo, Family::BaggedTrees,
                                                       Family::Knn,          Family::LogRegEcoc,
                                                       Family::RbfSvmOvo,    Family::Lda};

/// Stable identifier used in files and on the command line, e.g. "linear_svm_ovo".
std::string_view family_key(Family family) noexcept;
/// Human-readable name used in report tables, e.g. "Linear SVM".
std::string_view family_display_name(Family family) noexcept;
Family parse_family(std::string_view key);

/// Hyperparameter names per family:
///   linear_svm_ovo: C            rbf_svm_ovo: C, gamma
///   logreg_ecoc:    reg          knn:         k
///   bagged_trees:   tree_count, min_leaf      lda: lambda
/// RBF without an explicit gamma uses the median-distance heuristic on the
/// training rows; the fitted model records the value used.
struct ClassifierSpec {
  Family family = Family::LinearSvmOvo;
  std::map<std::string, double> hyperparameters;
  std::uint64_t seed = 0;

  static ClassifierSpec defaults(Family family, std::uint64_t seed = 0);
  bool has(const std::string& name) const { return hyperparameters.count(name) != 0; }
  double get(const std::string& name) const;
  /// Throws ConfigError on unknown names or out-of-domain values.
  void validate() const;
  /// "C=1, gamma=0.01" in key order.
  std::string describe() const;

  bool operator==(const ClassifierSpec&) const = default;
};

using ClassifierPayload =
    std::variant<std::monostate, OvoModel<BinaryLinearModel>, OvoModel<KernelModel>, EcocModel,
                 KnnModel, TreeEnsemble, LdaModel>;

struct TrainedClassifier {
  ClassifierSpec spec;
  int num_classes = 0;
  int dims = 0;
  std::vector<std::string> class_names;
  /// Hash of the StandardizationParams the training features were produced with.
  std::string standardizer_hash;
  ClassifierPayload payload;

  bool empty() const { return std::holds_alternative<std::monostate>(payload); }
};

struct FitOptions {
  /// Accept features without a standardizer hash.
  bool allow_unstandardized = false;
  int jobs = 1;
  /// 0 means one more than the largest label present.
  int num_classes = 0;
  std::vector<std::string> class_names;
};

/// Median-distance heuristic: 1 / median squared distance between rows
/// (over at most `max_rows` rows chosen with `seed`).
double median_heuristic_gamma(const Matrix& X, std::uint64_t seed, std::size_t max_rows = 400);

TrainedClassifier fit(const ClassifierSpec& spec, const FeatureMatrix& train,
                      const FitOptions& options = {});

/// Predicts one label per row. The features must carry the model's
/// standardizer hash (StandardizationMismatch otherwise, unless the model was
/// trained on unstandardized data). An empty model raises EmptyModel.
std::vector<int> predict(const TrainedClassifier& model, const FeatureMatrix& features);
int predict_one(const TrainedClassifier& model, const Eigen::Ref<const Vector>& x);

std::string serialize_model(const TrainedClassifier& model);
TrainedClassifier deserialize_model(std::string_view bytes);
void save_model(const TrainedClassifier& model, const std::filesystem::path& path);
TrainedClassifier load_model(const std::filesystem::path& path);

}  // namespace debris
