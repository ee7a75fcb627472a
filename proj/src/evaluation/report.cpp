#include "debris/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "debris/error.hpp"

namespace debris {

std::string format_fixed(double value, int decimals) {
  if (decimals < 0 || decimals > 12) fail(ErrorKind::ConfigError, "decimals out of range");
  if (!std::isfinite(value)) return fmt::format("{}", value);
  const double scale = std::pow(10.0, decimals);
  double r = std::round(value * scale) / scale;  // std::round rounds halves away from zero
  if (r == 0.0) r = 0.0;                         // no "-0.0"
  return fmt::format("{:.{}f}", r, decimals);
}

std::string render_percent_row(std::span<const long> tenths) {
  std::string out;
  for (std::size_t i = 0; i < tenths.size(); ++i) {
    if (i) out += ", ";
    const long v = tenths[i];
    out += fmt::format("{}{}.{}", v < 0 ? "-" : "", std::labs(v) / 10, std::labs(v) % 10);
  }
  return out;
}

void sort_result_rows(std::vector<ResultRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.accuracy_percent != b.accuracy_percent) return a.accuracy_percent > b.accuracy_percent;
    if (a.macro_f1_percent != b.macro_f1_percent) return a.macro_f1_percent > b.macro_f1_percent;
    return a.family < b.family;
  });
}

std::string render_results_table(std::span<const ResultRow> rows) {
  const std::string head = "Classifier";
  std::size_t width = head.size();
  for (const auto& r : rows) width = std::max(width, family_display_name(r.family).size());
  std::string out = fmt::format("| {:<{}} | Accuracy (%) | Macro-F1 (%) |\n", head, width);
  out += fmt::format("|{}|--------------|--------------|\n", std::string(width + 2, '-'));
  for (const auto& r : rows) {
    out += fmt::format("| {:<{}} | {} | {} |\n", family_display_name(r.family), width,
                       format_fixed(r.accuracy_percent, 2), format_fixed(r.macro_f1_percent, 2));
  }
  return out;
}

std::string render_confusion_rows(std::span<const std::string> class_names,
                                  const std::vector<std::vector<long>>& row_percent_tenths) {
  if (class_names.size() != row_percent_tenths.size()) {
    fail(ErrorKind::DimensionError, "class names do not match the confusion matrix");
  }
  std::string out;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    out += fmt::format("  {}: {}\n", class_names[c], render_percent_row(row_percent_tenths[c]));
  }
  return out;
}

const ReportDocument::Section* ReportDocument::find(std::string_view name) const {
  for (const auto& s : sections) {
    if (s.first == name) return &s;
  }
  return nullptr;
}

const std::string& ReportDocument::value(std::string_view section, std::string_view key) const {
  const auto* s = find(section);
  if (!s) fail(ErrorKind::ReportParseError, fmt::format("missing section [{}]", section));
  for (const auto& [k, v] : s->second) {
    if (k == key) return v;
  }
  fail(ErrorKind::ReportParseError, fmt::format("missing key '{}' in [{}]", key, section));
}

namespace {

std::string join(std::span<const std::string> items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string confusion_counts(const Metrics& m) {
  std::string out;
  for (std::size_t r = 0; r < m.confusion.size(); ++r) {
    if (r) out += "; ";
    for (std::size_t c = 0; c < m.confusion[r].size(); ++c) {
      if (c) out += ' ';
      out += std::to_string(m.confusion[r][c]);
    }
  }
  return out;
}

void metric_keys(std::string& out, std::string_view prefix, const Metrics& m) {
  out += fmt::format("{}_accuracy = {}\n", prefix, m.accuracy);
  out += fmt::format("{}_macro_f1 = {}\n", prefix, m.macro_f1);
  out += fmt::format("{}_correct = {}\n", prefix, m.correct);
  out += fmt::format("{}_total = {}\n", prefix, m.total);
  out += fmt::format("{}_confusion = {}\n", prefix, confusion_counts(m));
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string render_report(const RunInfo& run, std::span<const EvaluationReport> reports) {
  std::string out = "# debris evaluation report\n\n[run]\n";
  out += "format = 1\n";
  out += fmt::format("seed = {}\n", run.seed);
  out += fmt::format("folds = {}\n", run.folds);
  out += fmt::format("classes = {}\n", join(run.class_names, ","));
  out += fmt::format("dims = {}\n", run.dims);
  out += fmt::format("train_rows = {}\n", run.train_rows);
  out += fmt::format("validation_rows = {}\n", run.validation_rows);
  out += fmt::format("test_rows = {}\n", run.test_rows);
  out += fmt::format("standardizer_sha256 = {}\n", run.standardizer_hash);
  out += fmt::format("backbone_sha256 = {}\n", run.backbone_sha256);

  std::vector<ResultRow> rows;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    out += fmt::format("\n[result {}]\n", family_key(r.family()));
    out += fmt::format("rank = {}\n", i + 1);
    out += fmt::format("name = {}\n", family_display_name(r.family()));
    out += fmt::format("hyperparameters = {}\n", r.spec.describe());
    out += fmt::format("cv_accuracy = {}\n", r.search.mean_accuracy.at(r.search.best_index));
    out += fmt::format("grid_points = {}\n", r.search.points.size());
    metric_keys(out, "test", r.test);
    if (r.validation) metric_keys(out, "validation", *r.validation);
    rows.push_back({r.family(), 100.0 * r.test.accuracy, 100.0 * r.test.macro_f1});
  }
  out += "\n[end]\n\n## Test set results\n\n";
  out += render_results_table(rows);
  out += "\n## Row-normalized confusion matrices (%, rows true, columns predicted)\n";
  for (const auto& r : reports) {
    out += fmt::format("\n### {}\n", family_display_name(r.family()));
    out += fmt::format("  columns: {}\n", join(run.class_names, ", "));
    out += render_confusion_rows(run.class_names, r.test.row_percent_tenths);
  }
  const bool any_validation =
      std::any_of(reports.begin(), reports.end(), [](const auto& r) { return r.validation.has_value(); });
  if (any_validation) out += "\n## Validation split (informational)\n\n";
  for (const auto& r : reports) {
    if (!r.validation) continue;
    out += fmt::format("  {}: accuracy {} macro-F1 {}\n", family_display_name(r.family()),
                       format_fixed(100.0 * r.validation->accuracy, 2), format_fixed(100.0 * r.validation->macro_f1, 2));
  }
  return out;
}

ReportDocument parse_report(std::string_view text) {
  ReportDocument doc;
  bool ended = false;
  std::size_t line_no = 0;
  while (!text.empty() && !ended) {
    const auto nl = text.find('\n');
    const auto raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorKind::ReportParseError, fmt::format("line {}: bad section header", line_no));
      auto name = trim(std::string_view(line).substr(1, line.size() - 2));
      if (name == "end") {
        ended = true;
        break;
      }
      doc.sections.push_back({name, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos || doc.sections.empty()) {
      fail(ErrorKind::ReportParseError, fmt::format("line {}: expected 'key = value'", line_no));
    }
    doc.sections.back().second.emplace_back(trim(std::string_view(line).substr(0, eq)),
                                            trim(std::string_view(line).substr(eq + 1)));
  }
  if (!ended) fail(ErrorKind::ReportParseError, "report has no [end] marker");
  if (!doc.find("run")) fail(ErrorKind::ReportParseError, "report has no [run] section");
  return doc;
}

std::string render_confusion_csv(std::span<const std::string> class_names, std::span<const EvaluationReport> reports) {
  std::string out = "family,true_class,predicted_class,count\n";
  for (const auto& r : reports) {
    const auto& m = r.test.confusion;
    if (m.size() != class_names.size()) fail(ErrorKind::DimensionError, "class names do not match the confusion matrix");
    for (std::size_t t = 0; t < m.size(); ++t)
      for (std::size_t p = 0; p < m.size(); ++p)
        out += fmt::format("{},{},{},{}\n", family_key(r.family()), class_names[t], class_names[p], m[t][p]);
  }
  return out;
}

}  // namespace debris
