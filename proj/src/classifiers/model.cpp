#include "debris/classifiers/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "debris/binio.hpp"
#include "debris/error.hpp"
#include "debris/rng.hpp"

namespace debris {
namespace {

struct FamilyInfo {
  Family family;
  std::string_view key;
  std::string_view name;
};

constexpr std::array<FamilyInfo, 6> kFamilies = {{
    {Family::LinearSvmOvo, "linear_svm_ovo", "Linear SVM"},
    {Family::BaggedTrees, "bagged_trees", "Bagged Trees"},
    {Family::Knn, "knn", "k-Nearest Neighbors"},
    {Family::LogRegEcoc, "logreg_ecoc", "Logistic Regression (ECOC)"},
    {Family::RbfSvmOvo, "rbf_svm_ovo", "RBF SVM"},
    {Family::Lda, "lda", "Linear Discriminant Analysis"},
}};

std::set<std::string> allowed_params(Family f) {
  switch (f) {
    case Family::LinearSvmOvo: return {"C"};
    case Family::RbfSvmOvo: return {"C", "gamma"};
    case Family::LogRegEcoc: return {"reg"};
    case Family::Knn: return {"k"};
    case Family::BaggedTrees: return {"tree_count", "min_leaf"};
    case Family::Lda: return {"lambda"};
  }
  return {};
}

bool is_positive_integer(double v) { return v >= 1 && std::floor(v) == v && v < 1e9; }

}  // namespace

std::string_view family_key(Family family) noexcept {
  for (const auto& i : kFamilies) {
    if (i.family == family) return i.key;
  }
  return "unknown";
}

std::string_view family_display_name(Family family) noexcept {
  for (const auto& i : kFamilies) {
    if (i.family == family) return i.name;
  }
  return "unknown";
}

Family parse_family(std::string_view key) {
  for (const auto& i : kFamilies) {
    if (i.key == key) return i.family;
  }
  fail(ErrorKind::ConfigError, fmt::format("unknown classifier family '{}'", key));
}

ClassifierSpec ClassifierSpec::defaults(Family family, std::uint64_t seed) {
  ClassifierSpec s{family, {}, seed};
  switch (family) {
    case Family::LinearSvmOvo: s.hyperparameters = {{"C", 1.0}}; break;
    case Family::RbfSvmOvo: s.hyperparameters = {{"C", 1.0}}; break;
    case Family::LogRegEcoc: s.hyperparameters = {{"reg", 1e-3}}; break;
    case Family::Knn: s.hyperparameters = {{"k", 1}}; break;
    case Family::BaggedTrees: s.hyperparameters = {{"tree_count", 100}, {"min_leaf", 1}}; break;
    case Family::Lda: s.hyperparameters = {{"lambda", 1e-2}}; break;
  }
  return s;
}

double ClassifierSpec::get(const std::string& name) const {
  auto it = hyperparameters.find(name);
  if (it != hyperparameters.end()) return it->second;
  const auto d = defaults(family);
  auto dit = d.hyperparameters.find(name);
  if (dit == d.hyperparameters.end()) {
    fail(ErrorKind::ConfigError, fmt::format("{} has no hyperparameter '{}'", family_key(family), name));
  }
  return dit->second;
}

void ClassifierSpec::validate() const {
  const auto allowed = allowed_params(family);
  for (const auto& [name, value] : hyperparameters) {
    if (!allowed.count(name)) {
      fail(ErrorKind::ConfigError, fmt::format("{} does not accept hyperparameter '{}'", family_key(family), name));
    }
    const bool integer = name == "k" || name == "tree_count" || name == "min_leaf";
    const bool ok = integer ? is_positive_integer(value) : (value > 0 && std::isfinite(value));
    if (!ok) {
      fail(ErrorKind::ConfigError, fmt::format("{}: {} = {} is outside its domain", family_key(family), name, value));
    }
  }
}

std::string ClassifierSpec::describe() const {
  std::string out;
  for (const auto& [name, value] : hyperparameters) {
    if (!out.empty()) out += ", ";
    out += fmt::format("{}={:g}", name, value);
  }
  return out;
}

double median_heuristic_gamma(const Matrix& X, std::uint64_t seed, std::size_t max_rows) {
  const auto n = static_cast<std::size_t>(X.rows());
  if (n < 2) fail(ErrorKind::InsufficientData, "median heuristic needs at least two rows");
  std::vector<Eigen::Index> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<Eigen::Index>(i);
  if (n > max_rows) {
    Rng rng(seed);
    rng.shuffle(std::span(rows));
    rows.resize(max_rows);
    std::sort(rows.begin(), rows.end());
  }
  std::vector<double> d2;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = a + 1; b < rows.size(); ++b) {
      d2.push_back((X.row(rows[a]) - X.row(rows[b])).squaredNorm());
    }
  }
  auto mid = d2.begin() + static_cast<std::ptrdiff_t>(d2.size() / 2);
  std::nth_element(d2.begin(), mid, d2.end());
  const double median = *mid;
  return median > 0 ? 1.0 / median : 1.0;
}

TrainedClassifier fit(const ClassifierSpec& spec_in, const FeatureMatrix& train, const FitOptions& options) {
  spec_in.validate();
  train.validate();
  if (train.standardizer_hash.empty() && !options.allow_unstandardized) {
    fail(ErrorKind::StandardizationMismatch,
         "training features are not standardized (no standardizer hash); pass allow_unstandardized to override");
  }
  if (train.rows() == 0) fail(ErrorKind::EmptyModel, "cannot fit on an empty training set");
  if (train.labels.size() != train.rows()) fail(ErrorKind::DimensionError, "training features need labels");

  TrainedClassifier model;
  model.spec = spec_in;
  model.dims = static_cast<int>(train.dims());
  model.standardizer_hash = train.standardizer_hash;
  model.class_names = options.class_names;
  const int max_label = *std::max_element(train.labels.begin(), train.labels.end());
  model.num_classes = options.num_classes > 0 ? options.num_classes : max_label + 1;
  if (*std::min_element(train.labels.begin(), train.labels.end()) < 0 || max_label >= model.num_classes) {
    fail(ErrorKind::DimensionError, "labels outside [0, num_classes)");
  }
  if (!model.class_names.empty() && static_cast<int>(model.class_names.size()) != model.num_classes) {
    fail(ErrorKind::DimensionError, "class_names size does not match num_classes");
  }
  const int k = model.num_classes;
  const auto& X = train.X;
  const std::span<const int> y(train.labels);
  auto& spec = model.spec;

  switch (spec.family) {
    case Family::LinearSvmOvo: {
      const double C = spec.get("C");
      model.payload = train_ovo<BinaryLinearModel>(
          [&](const Matrix& sub, std::span<const int> yy, std::size_t) { return solve_binary_svm_linear(sub, yy, C); },
          X, y, k, options.jobs);
      break;
    }
    case Family::RbfSvmOvo: {
      const double C = spec.get("C");
      if (!spec.has("gamma")) spec.hyperparameters["gamma"] = median_heuristic_gamma(X, spec.seed);
      const double gamma = spec.get("gamma");
      model.payload = train_ovo<KernelModel>(
          [&](const Matrix& sub, std::span<const int> yy, std::size_t) {
            return solve_binary_svm_rbf(sub, yy, C, gamma);
          },
          X, y, k, options.jobs);
      break;
    }
    case Family::LogRegEcoc:
      model.payload = train_ecoc(X, y, ovo_coding(k), spec.get("reg"), {}, options.jobs);
      break;
    case Family::Knn:
      model.payload = knn_fit(X, y, train.record_ids, static_cast<int>(spec.get("k")), k);
      break;
    case Family::BaggedTrees: {
      BaggingOptions bag;
      bag.tree_count = static_cast<int>(spec.get("tree_count"));
      bag.min_leaf = static_cast<int>(spec.get("min_leaf"));
      model.payload = train_bagged_trees(X, y, k, bag, spec.seed, options.jobs);
      break;
    }
    case Family::Lda:
      model.payload = train_lda(X, y, k, spec.get("lambda"));
      break;
  }
  return model;
}

int predict_one(const TrainedClassifier& model, const Eigen::Ref<const Vector>& x) {
  return std::visit(
      [&](const auto& p) -> int {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          fail(ErrorKind::EmptyModel, "classifier has not been fitted");
        } else {
          return p.predict(x);
        }
      },
      model.payload);
}

std::vector<int> predict(const TrainedClassifier& model, const FeatureMatrix& features) {
  if (model.empty()) fail(ErrorKind::EmptyModel, "classifier has not been fitted");
  if (features.rows() == 0) return {};
  if (static_cast<int>(features.dims()) != model.dims) {
    fail(ErrorKind::DimensionError,
         fmt::format("features have {} columns, model expects {}", features.dims(), model.dims));
  }
  if (features.standardizer_hash != model.standardizer_hash) {
    fail(ErrorKind::StandardizationMismatch,
         fmt::format("features standardized with '{}', model trained with '{}'",
                     features.standardizer_hash.empty() ? "<none>" : features.standardizer_hash.substr(0, 12),
                     model.standardizer_hash.empty() ? "<none>" : model.standardizer_hash.substr(0, 12)));
  }
  std::vector<int> out(features.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = predict_one(model, features.X.row(static_cast<Eigen::Index>(i)).transpose());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence. All scalars little-endian; real values float64.

namespace {

constexpr std::string_view kModelMagic = "DBMD";
constexpr std::uint32_t kModelVersion = 1;
constexpr std::uint32_t kRealWidth = 8;

void put_vector(ByteWriter& w, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v[i]);
}

void put_matrix(ByteWriter& w, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.f64(m(i, j));
}

Vector get_vector(ByteReader& r, std::size_t n) {
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = r.f64();
  return v;
}

Matrix get_matrix(ByteReader& r, std::size_t rows, std::size_t cols) {
  if (rows && cols && r.remaining() / 8 / cols < rows) fail(ErrorKind::ModelFormatError, "matrix exceeds payload");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.f64();
  return m;
}

void put_pair(ByteWriter& w, std::pair<int, int> p) {
  w.i32(p.first);
  w.i32(p.second);
}

std::pair<int, int> get_pair(ByteReader& r) {
  const int a = r.i32();
  return {a, r.i32()};
}

}  // namespace

std::string serialize_model(const TrainedClassifier& m) {
  if (m.empty()) fail(ErrorKind::EmptyModel, "cannot save an unfitted classifier");
  const auto d = static_cast<std::size_t>(m.dims);
  ByteWriter w;
  w.raw(kModelMagic);
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(m.spec.family));
  w.u32(kRealWidth);
  w.u64(m.spec.seed);
  w.u32(static_cast<std::uint32_t>(m.spec.hyperparameters.size()));
  for (const auto& [name, value] : m.spec.hyperparameters) {
    w.str(name);
    w.f64(value);
  }
  w.str(m.standardizer_hash);
  w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(m.num_classes));
  w.u32(static_cast<std::uint32_t>(m.class_names.size()));
  for (const auto& n : m.class_names) w.str(n);

  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, OvoModel<BinaryLinearModel>>) {
          w.u32(static_cast<std::uint32_t>(p.models.size()));
          for (const auto& bm : p.models) {
            put_pair(w, bm.class_pair);
            w.f64(bm.b);
            put_vector(w, bm.w);
          }
        } else if constexpr (std::is_same_v<T, OvoModel<KernelModel>>) {
          w.u32(static_cast<std::uint32_t>(p.models.size()));
          for (const auto& km : p.models) {
            put_pair(w, km.class_pair);
            w.f64(km.b);
            w.f64(km.gamma);
            w.u32(static_cast<std::uint32_t>(km.dual_coeffs.size()));
            put_vector(w, km.dual_coeffs);
            put_matrix(w, km.support_vectors);
          }
        } else if constexpr (std::is_same_v<T, EcocModel>) {
          w.u32(static_cast<std::uint32_t>(p.coding.cols()));
          for (Eigen::Index r = 0; r < p.coding.rows(); ++r)
            for (Eigen::Index c = 0; c < p.coding.cols(); ++c) w.u8(static_cast<std::uint8_t>(p.coding(r, c) + 1));
          for (const auto& l : p.learners) {
            w.f64(l.b);
            put_vector(w, l.w);
          }
        } else if constexpr (std::is_same_v<T, KnnModel>) {
          w.u32(static_cast<std::uint32_t>(p.k));
          w.u64(static_cast<std::uint64_t>(p.X.rows()));
          put_matrix(w, p.X);
          for (int l : p.labels) w.i32(l);
          for (auto id : p.record_ids) w.i64(id);
        } else if constexpr (std::is_same_v<T, TreeEnsemble>) {
          w.u32(static_cast<std::uint32_t>(p.trees.size()));
          for (std::size_t t = 0; t < p.trees.size(); ++t) {
            w.u64(p.bootstrap_seeds[t]);
            w.u32(static_cast<std::uint32_t>(p.trees[t].nodes.size()));
            for (const auto& n : p.trees[t].nodes) {
              w.i32(n.feature);
              w.f64(n.threshold);
              w.i32(n.left);
              w.i32(n.right);
              for (int c : n.counts) w.u32(static_cast<std::uint32_t>(c));
            }
          }
        } else if constexpr (std::is_same_v<T, LdaModel>) {
          w.f64(p.lambda);
          put_vector(w, p.priors);
          put_matrix(w, p.class_means);
          put_matrix(w, p.coefficients);
          put_vector(w, p.offsets);
        }
      },
      m.payload);
  return std::move(w).take();
}

TrainedClassifier deserialize_model(std::string_view bytes) {
  ByteReader r(bytes, ErrorKind::ModelFormatError);
  if (r.raw(4) != kModelMagic) fail(ErrorKind::ModelFormatError, "not a model file");
  if (r.u32() != kModelVersion) fail(ErrorKind::ModelFormatError, "unsupported model version");
  TrainedClassifier m;
  const auto tag = r.u32();
  if (tag >= kAllFamilies.size()) fail(ErrorKind::ModelFormatError, "unknown family tag");
  m.spec.family = static_cast<Family>(tag);
  if (r.u32() != kRealWidth) fail(ErrorKind::ModelFormatError, "unsupported real width");
  m.spec.seed = r.u64();
  const auto nparams = r.u32();
  for (std::uint32_t i = 0; i < nparams; ++i) {
    auto name = r.str();
    m.spec.hyperparameters[name] = r.f64();
  }
  m.standardizer_hash = r.str();
  m.dims = static_cast<int>(r.u32());
  m.num_classes = static_cast<int>(r.u32());
  const auto nnames = r.u32();
  for (std::uint32_t i = 0; i < nnames; ++i) m.class_names.push_back(r.str());
  const auto d = static_cast<std::size_t>(m.dims);
  const auto k = static_cast<std::size_t>(m.num_classes);

  switch (m.spec.family) {
    case Family::LinearSvmOvo: {
      OvoModel<BinaryLinearModel> p{m.num_classes, {}};
      p.models.resize(r.u32());
      for (auto& bm : p.models) {
        bm.class_pair = get_pair(r);
        bm.b = r.f64();
        bm.w = get_vector(r, d);
      }
      m.payload = std::move(p);
      break;
    }
    case Family::RbfSvmOvo: {
      OvoModel<KernelModel> p{m.num_classes, {}};
      p.models.resize(r.u32());
      for (auto& km : p.models) {
        km.class_pair = get_pair(r);
        km.b = r.f64();
        km.gamma = r.f64();
        const auto nsv = r.u32();
        km.dual_coeffs = get_vector(r, nsv);
        km.support_vectors = get_matrix(r, nsv, d);
      }
      m.payload = std::move(p);
      break;
    }
    case Family::LogRegEcoc: {
      EcocModel p;
      const auto cols = r.u32();
      p.coding.resize(static_cast<Eigen::Index>(k), cols);
      for (Eigen::Index i = 0; i < p.coding.rows(); ++i)
        for (Eigen::Index c = 0; c < p.coding.cols(); ++c) p.coding(i, c) = static_cast<int>(r.u8()) - 1;
      validate_coding(p.coding);
      p.learners.resize(cols);
      for (auto& l : p.learners) {
        l.b = r.f64();
        l.w = get_vector(r, d);
      }
      m.payload = std::move(p);
      break;
    }
    case Family::Knn: {
      KnnModel p;
      p.k = static_cast<int>(r.u32());
      p.num_classes = m.num_classes;
      const auto n = r.u64();
      p.X = get_matrix(r, n, d);
      p.labels.resize(n);
      for (auto& l : p.labels) l = r.i32();
      p.record_ids.resize(n);
      for (auto& id : p.record_ids) id = r.i64();
      m.payload = std::move(p);
      break;
    }
    case Family::BaggedTrees: {
      TreeEnsemble p;
      p.num_classes = m.num_classes;
      const auto t = r.u32();
      p.trees.resize(t);
      p.bootstrap_seeds.resize(t);
      for (std::uint32_t i = 0; i < t; ++i) {
        p.bootstrap_seeds[i] = r.u64();
        const auto nn = r.u32();
        if (nn == 0 || r.remaining() / (20 + 4 * k) < nn) fail(ErrorKind::ModelFormatError, "bad tree node count");
        auto& nodes = p.trees[i].nodes;
        nodes.resize(nn);
        for (auto& n : nodes) {
          n.feature = r.i32();
          n.threshold = r.f64();
          n.left = r.i32();
          n.right = r.i32();
          n.counts.resize(k);
          for (auto& c : n.counts) c = static_cast<int>(r.u32());
          const auto limit = static_cast<int>(nn);
          if (!n.is_leaf() && (n.feature >= m.dims || n.left <= 0 || n.right <= 0 || n.left >= limit ||
                               n.right >= limit)) {
            fail(ErrorKind::ModelFormatError, "tree node references out of range");
          }
        }
      }
      m.payload = std::move(p);
      break;
    }
    case Family::Lda: {
      LdaModel p;
      p.lambda = r.f64();
      p.priors = get_vector(r, k);
      p.class_means = get_matrix(r, k, d);
      p.coefficients = get_matrix(r, k, d);
      p.offsets = get_vector(r, k);
      m.payload = std::move(p);
      break;
    }
  }
  r.expect_end();
  return m;
}

void save_model(const TrainedClassifier& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model));
}

TrainedClassifier load_model(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::ModelFormatError, e.detail());
  }
  return deserialize_model(bytes);
}

}  // namespace debris
