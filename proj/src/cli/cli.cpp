#include "debris/cli.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>
#include <optional>

#include "debris/binio.hpp"
#include "debris/config.hpp"
#include "debris/pipeline.hpp"
#include "debris/report.hpp"

namespace debris {
namespace {

namespace fs = std::filesystem;

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> jobs;
  std::string family;
  std::string model;
  std::vector<std::string> images;
  std::string report_input;
};

RunConfig config_from(const Args& a) {
  if (a.config.empty()) fail(ErrorKind::ConfigError, "--config is required for this command");
  ConfigOverrides o;
  o.seed = a.seed;
  if (a.out_dir) o.output_dir = fs::absolute(*a.out_dir);
  o.jobs = a.jobs;
  return load_config(a.config, o);
}

ExtractOptions extract_options(const RunConfig& c) {
  ExtractOptions o;
  o.augmentation = c.augmentation;
  o.jobs = c.jobs;
  return o;
}

void cmd_split(const RunConfig& c, std::ostream& out, std::ostream& err) {
  ScanOptions scan;
  scan.empty_class_is_error = c.empty_class_is_error;
  scan.on_warning = [&](const std::string& msg) { err << "warning: " << msg << '\n'; };
  const auto manifest = stratified_split(scan_directory(c.dataset_root, scan), c.fractions, c.split_seed());
  save_manifest(manifest, c.artifact(c.manifest_file));
  out << render_split_table(manifest);
  out << "manifest: " << c.artifact(c.manifest_file).string() << '\n';
}

void cmd_extract(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto manifest = load_manifest(c.artifact(c.manifest_file));
  const auto backbone = load_backbone(c.backbone);
  const auto options = extract_options(c);
  const auto cache_path = c.artifact(c.features_file);
  auto key_path = cache_path;
  key_path += ".key";
  const auto key = extraction_key(manifest, backbone.sha256(), options);

  std::optional<FeatureCache> cache;
  if (fs::exists(cache_path)) {
    try {
      const auto stored_key = fs::exists(key_path) ? read_file(key_path) : std::string();
      auto loaded = load_feature_cache(cache_path);
      if (stored_key == key + "\n" && loaded.backbone_sha256 == backbone.sha256() &&
          cache_layout_matches(loaded, manifest, options.augmentation.copies_per_image)) {
        cache = std::move(loaded);
        out << "feature cache is current; skipping inference\n";
      } else {
        out << "feature cache is stale; re-extracting\n";
      }
    } catch (const Error& e) {
      err << "warning: feature cache unusable (" << e.what() << "); re-extracting\n";
    }
  }
  if (!cache) {
    cache = extract_features(manifest, backbone, options);
    save_feature_cache(*cache, cache_path);
    write_file_atomic(key_path, key + "\n");
  }

  FeatureMatrix raw = cache->features;
  tag_splits(raw, manifest);
  const auto params = fit_standardizer(raw.select(raw.rows_in(Split::Train)));
  save_standardizer(params, c.artifact(c.standardizer_file));

  std::size_t augmented = 0;
  for (auto v : cache->variants) augmented += v != 0;
  out << fmt::format("rows: {} (train {} + augmented {}, validation {}, test {}), dims {}\n", raw.rows(),
                     manifest.count(Split::Train), augmented, manifest.count(Split::Validation),
                     manifest.count(Split::Test), raw.dims());
  out << "standardizer: " << params.hash() << '\n';
}

struct Loaded {
  DatasetManifest manifest;
  FeatureMatrix features;
  std::string backbone_sha256;
};

Loaded load_standardized(const RunConfig& c) {
  Loaded l;
  l.manifest = load_manifest(c.artifact(c.manifest_file));
  const auto cache = load_feature_cache(c.artifact(c.features_file));
  const auto params = load_standardizer(c.artifact(c.standardizer_file));
  l.features = standardized_features(cache, l.manifest, params);
  l.backbone_sha256 = cache.backbone_sha256;
  return l;
}

double gamma0_for(const RunConfig& c, const FeatureMatrix& features) {
  const auto train = features.select(features.rows_in(Split::Train));
  return median_heuristic_gamma(train.X, c.cv_seed());
}

void cmd_train(const RunConfig& c, const std::string& family_name, std::ostream& out) {
  const Family family = parse_family(family_name);
  const auto l = load_standardized(c);
  const auto train = l.features.select(l.features.rows_in(Split::Train));
  if (train.rows() == 0) fail(ErrorKind::DimensionError, "the train split is empty");
  CvPlan plan{c.folds, c.cv_seed(), c.jobs};
  FitOptions fo;
  fo.jobs = c.jobs;
  fo.class_names = l.manifest.class_names();
  fo.num_classes = static_cast<int>(fo.class_names.size());
  const auto grid = c.grid_for(family, family == Family::RbfSvmOvo ? gamma0_for(c, l.features) : 1.0);
  const auto search = grid_search(ClassifierSpec{family, {}, c.cv_seed()}, grid, train, plan, fo);
  const auto model = fit(search.best, train, fo);
  save_model(model, c.model_path(family));
  out << fmt::format("{}: {} (cv accuracy {})\n", family_display_name(family), model.spec.describe(),
                     format_fixed(100.0 * search.mean_accuracy[search.best_index], 2));
  out << "model: " << c.model_path(family).string() << '\n';
}

void cmd_evaluate(const RunConfig& c, std::ostream& out) {
  const auto l = load_standardized(c);
  const auto class_names = l.manifest.class_names();
  const double gamma0 = gamma0_for(c, l.features);
  std::vector<FamilySearch> searches;
  for (Family f : c.families) searches.push_back({f, c.grid_for(f, gamma0)});

  EvaluateOptions eo;
  eo.class_names = class_names;
  eo.num_classes = static_cast<int>(class_names.size());
  eo.on_family_done = [&](const EvaluationReport& r) {
    out << fmt::format("{}: {} test accuracy {}\n", family_display_name(r.family()), r.spec.describe(),
                       format_fixed(100.0 * r.test.accuracy, 2));
  };
  const auto reports = evaluate_all(l.features, searches, CvPlan{c.folds, c.cv_seed(), c.jobs}, eo);

  for (const auto& r : reports) save_model(r.model, c.model_path(r.family()));
  RunInfo run;
  run.seed = c.seed;
  run.folds = c.folds;
  run.class_names = class_names;
  run.dims = l.features.dims();
  run.train_rows = l.features.rows_in(Split::Train).size();
  run.validation_rows = l.features.rows_in(Split::Validation).size();
  run.test_rows = l.features.rows_in(Split::Test).size();
  run.standardizer_hash = l.features.standardizer_hash;
  run.backbone_sha256 = l.backbone_sha256;
  const auto text = render_report(run, reports);
  write_file_atomic(c.artifact(c.report_file), text);
  write_file_atomic(c.artifact(c.confusion_csv_file), render_confusion_csv(class_names, reports));
  std::vector<ResultRow> rows;
  for (const auto& r : reports) rows.push_back({r.family(), 100.0 * r.test.accuracy, 100.0 * r.test.macro_f1});
  out << '\n' << render_results_table(rows);
  out << "report: " << c.artifact(c.report_file).string() << '\n';
}

void cmd_predict(const RunConfig& c, const std::string& model_path, const std::vector<std::string>& images,
                 std::ostream& out) {
  const auto model = load_model(model_path);
  const auto params = load_standardizer(c.artifact(c.standardizer_file));
  if (params.hash() != model.standardizer_hash) {
    fail(ErrorKind::StandardizationMismatch,
         fmt::format("model was trained with standardizer {}, but {} has {}", model.standardizer_hash.substr(0, 12),
                     c.standardizer_file.string(), params.hash().substr(0, 12)));
  }
  const auto backbone = load_backbone(c.backbone);
  std::vector<fs::path> paths(images.begin(), images.end());
  const auto labels = predict(model, embed_images(paths, backbone, params, {}, c.jobs));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto l = static_cast<std::size_t>(labels[i]);
    out << images[i] << '\t' << (l < model.class_names.size() ? model.class_names[l] : std::to_string(l)) << '\n';
  }
}

void cmd_report(const Args& a, std::ostream& out) {
  fs::path input = a.report_input;
  std::optional<RunConfig> c;
  if (input.empty()) {
    c = config_from(a);
    input = c->artifact(c->report_file);
  }
  const auto doc = parse_report(read_file(input));
  std::vector<ResultRow> rows;
  for (const auto& [name, kv] : doc.sections) {
    if (!name.starts_with("result ")) continue;
    const Family f = parse_family(name.substr(7));
    auto pct = [&](const char* key) {
      try {
        return 100.0 * std::stod(doc.value(name, key));
      } catch (const std::logic_error&) {
        fail(ErrorKind::ReportParseError, fmt::format("[{}] {} is not a number", name, key));
      }
    };
    rows.push_back({f, pct("test_accuracy"), pct("test_macro_f1")});
  }
  sort_result_rows(rows);
  out << render_results_table(rows);
}

}  // namespace

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ConfigError: return 1;
    case ErrorKind::InferenceError:
    case ErrorKind::NonFiniteEmbedding:
    case ErrorKind::InsufficientData:
    case ErrorKind::DegenerateBinaryProblem:
    case ErrorKind::CodingMatrixError:
    case ErrorKind::SingularCovariance:
    case ErrorKind::EmptyModel: return 3;
    default: return 2;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Debris image classification pipeline", "debris"};
  app.require_subcommand(1);
  Args a;
  app.add_option("--config", a.config, "JSON run configuration");
  app.add_option("--seed", a.seed, "Override the config seed");
  app.add_option("--out", a.out_dir, "Override the output directory");
  app.add_option("--jobs", a.jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* split = app.add_subcommand("split", "Scan the dataset and write the split manifest");
  auto* extract = app.add_subcommand("extract", "Embed images and fit the standardizer");
  auto* train = app.add_subcommand("train", "Tune and train one classifier family");
  train->add_option("--family", a.family, "Family key, e.g. linear_svm_ovo")->required();
  auto* evaluate = app.add_subcommand("evaluate", "Tune, train and test every configured family");
  auto* pred = app.add_subcommand("predict", "Classify image files with a saved model");
  pred->add_option("--model", a.model, "Model file")->required();
  pred->add_option("images", a.images, "Image files")->required();
  auto* report = app.add_subcommand("report", "Print the results table of a saved report");
  report->add_option("--input", a.report_input, "Report file (default: from the config)");
  for (auto* sub : {split, extract, train, evaluate, pred, report}) sub->fallthrough();

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (report->parsed()) {
      cmd_report(a, out);
      return 0;
    }
    const auto c = config_from(a);
    if (split->parsed()) cmd_split(c, out, err);
    if (extract->parsed()) cmd_extract(c, out, err);
    if (train->parsed()) cmd_train(c, a.family, out);
    if (evaluate->parsed()) cmd_evaluate(c, out);
    if (pred->parsed()) cmd_predict(c, a.model, a.images, out);
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace debris
