#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "debris/evaluation.hpp"

namespace debris {

/// Fixed-point text with round-half-away-from-zero at `decimals`.
std::string format_fixed(double value, int decimals);

/// "1.3, 0.0, 0.0, 98.7" from percentages stored in tenths.
std::string render_percent_row(std::span<const long> tenths);

struct ResultRow {
  Family family;
  double accuracy_percent = 0.0;
  double macro_f1_percent = 0.0;
};

/// Accuracy, then macro-F1 (descending), then Family declaration order.
void sort_result_rows(std::vector<ResultRow>& rows);

/// Markdown table, one row per entry in the given order:
///   | Linear SVM | 99.45 | 99.47 |
/// with the name column padded to the widest name.
std::string render_results_table(std::span<const ResultRow> rows);

/// One line per true class: "  Wood: 1.3, 0.0, 0.0, 98.7".
std::string render_confusion_rows(std::span<const std::string> class_names,
                                  const std::vector<std::vector<long>>& row_percent_tenths);

struct RunInfo {
  std::uint64_t seed = 0;
  int folds = 5;
  std::vector<std::string> class_names;
  std::size_t dims = 0;
  std::size_t train_rows = 0;
  std::size_t validation_rows = 0;
  std::size_t test_rows = 0;
  std::string standardizer_hash;
  std::string backbone_sha256;
};

/// Parsed key-value part of a report. Section names keep their argument,
/// e.g. "run" or "result linear_svm_ovo".
struct ReportDocument {
  using Section = std::pair<std::string, std::vector<std::pair<std::string, std::string>>>;
  std::vector<Section> sections;

  const Section* find(std::string_view name) const;
  /// Throws ReportParseError when the section or key is missing.
  const std::string& value(std::string_view section, std::string_view key) const;
};

/// Report text: a key-value block ("[run]", one "[result <family>]" per
/// report in ranked order, closed by "[end]") followed by the results table
/// and the row-normalized confusion matrices.
std::string render_report(const RunInfo& run, std::span<const EvaluationReport> reports);
ReportDocument parse_report(std::string_view text);

/// family,true_class,predicted_class,count rows of raw confusion counts.
std::string render_confusion_csv(std::span<const std::string> class_names, std::span<const EvaluationReport> reports);

}  // namespace debris
