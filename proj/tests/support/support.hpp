#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "debris/classifiers/model.hpp"
#include "debris/error.hpp"
#include "debris/features.hpp"
#include "debris/rng.hpp"

namespace debris::testing {

/// Name of the ErrorKind `f` throws, "none" if it returns normally.
template <typename F>
std::string thrown_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return std::string(to_string(e.kind()));
  }
  return "none";
}

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Standard normal via Box-Muller on the project RNG, so fixtures do not
/// depend on the standard library's distribution implementation.
double normal(Rng& rng);

/// K Gaussian classes in D dimensions with unit within-class std. Class
/// means are `separation` apart pairwise (scaled simplex-like corners on
/// the first K axes). Rows are class-major; record_ids are 0..N-1.
FeatureMatrix make_blobs(int num_classes, int dims, int per_class, double separation, std::uint64_t seed);

/// Marks each class's rows with the dataset split rule (floor train, ceil
/// half of the rest validation, remainder test) in class-major order.
void assign_blob_splits(FeatureMatrix& blobs, int per_class);

/// Writes `per_class` PNG files per class under root/<class>/. Each class
/// has a distinct texture so the toy backbone separates them.
void write_png_dataset(const std::filesystem::path& root, const std::vector<std::string>& classes,
                       int per_class, std::uint64_t seed, int height = 48, int width = 64);

/// Writes a toy-backbone descriptor config and returns its path.
std::filesystem::path write_run_config(const std::filesystem::path& dir, const std::string& extra_json = "");

/// Stored per-family results from tests/fixtures/reference_results.json.
struct ReferenceResult {
  Family family;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<std::vector<long>> row_percent_tenths;
};
struct ReferenceTable {
  std::vector<std::string> classes;
  std::vector<ReferenceResult> results;
};
ReferenceTable load_reference_table();

}  // namespace debris::testing
