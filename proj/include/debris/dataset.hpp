#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace debris {

enum class Split : std::uint8_t { Unassigned, Train, Validation, Test };

std::string_view to_string(Split split) noexcept;
Split parse_split(std::string_view text);

struct ClassLabel {
  int id = 0;
  std::string name;

  bool operator==(const ClassLabel&) const = default;
};

struct ImageRecord {
  std::int64_t record_id = 0;
  /// Relative to the manifest root.
  std::filesystem::path path;
  int label = 0;
  Split split = Split::Unassigned;

  bool operator==(const ImageRecord&) const = default;
};

/// Exact non-negative rational; split arithmetic is done in integers so
/// that e.g. 70% of 450 is exactly 315.
struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  /// Parses "7/10", "0.70" or "1".
  static Fraction parse(std::string_view text);
  Fraction reduced() const;
  std::string str() const;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  bool operator==(const Fraction& other) const;
};

struct SplitFractions {
  Fraction train{7, 10};
  Fraction validation{3, 20};
  Fraction test{3, 20};

  /// Throws ConfigError unless all positive and summing to exactly 1.
  void validate() const;
  bool operator==(const SplitFractions&) const = default;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ClassLabel> classes;
  std::vector<ImageRecord> records;
  std::uint64_t split_seed = 0;
  SplitFractions split_fractions;

  std::filesystem::path absolute_path(const ImageRecord& record) const { return root / record.path; }
  const ImageRecord& record(std::int64_t record_id) const;
  std::vector<std::string> class_names() const;
  std::size_t count(Split split) const;

  bool operator==(const DatasetManifest&) const = default;
};

struct ScanOptions {
  /// A class directory without images is a warning (the class is dropped)
  /// unless this is set, in which case it raises EmptyClass.
  bool empty_class_is_error = false;
  std::function<void(const std::string&)> on_warning;
};

bool is_image_file(const std::filesystem::path& path);

DatasetManifest scan_directory(const std::filesystem::path& root, const ScanOptions& options = {});

struct SplitCounts {
  std::int64_t train = 0;
  std::int64_t validation = 0;
  std::int64_t test = 0;
};

/// Per-class counts: floor(train * n), then validation takes the ceiling of
/// its proportional share of the remainder, test takes the rest.
SplitCounts split_counts(std::int64_t class_size, const SplitFractions& fractions);

DatasetManifest stratified_split(DatasetManifest manifest, const SplitFractions& fractions,
                                 std::uint64_t seed);

std::string serialize_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Rows of (class name, train, validation, test, total) plus a totals row.
std::string render_split_table(const DatasetManifest& manifest);

}  // namespace debris
