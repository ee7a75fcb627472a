#include "support.hpp"

#include <fmt/format.h>
#include <stdlib.h>

#include <fstream>
#include <numbers>
#include <opencv2/imgcodecs.hpp>
#include <stdexcept>

#include "debris/backbone.hpp"
#include "json.hpp"

namespace debris::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  std::string pattern = (fs::temp_directory_path() / "debris-test-XXXXXX").string();
  if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

double normal(Rng& rng) {
  double u1 = rng.uniform01();
  while (u1 <= 0.0) u1 = rng.uniform01();
  const double u2 = rng.uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

FeatureMatrix make_blobs(int num_classes, int dims, int per_class, double separation, std::uint64_t seed) {
  Rng rng(seed);
  FeatureMatrix f;
  const int n = num_classes * per_class;
  f.X.resize(n, dims);
  // Means at separation/sqrt(2) along distinct axes: pairwise distance = separation.
  const double offset = separation / std::sqrt(2.0);
  for (int c = 0; c < num_classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      const int row = c * per_class + i;
      for (int d = 0; d < dims; ++d) f.X(row, d) = normal(rng) + (d == c ? offset : 0.0);
      f.labels.push_back(c);
      f.record_ids.push_back(row);
    }
  }
  return f;
}

void assign_blob_splits(FeatureMatrix& blobs, int per_class) {
  const int train = per_class * 7 / 10;
  const int rest = per_class - train;
  const int validation = (rest + 1) / 2;
  blobs.splits.resize(blobs.rows());
  for (std::size_t r = 0; r < blobs.rows(); ++r) {
    const int i = static_cast<int>(r) % per_class;
    blobs.splits[r] = i < train ? Split::Train : i < train + validation ? Split::Validation : Split::Test;
  }
}

void write_png_dataset(const fs::path& root, const std::vector<std::string>& classes, int per_class,
                       std::uint64_t seed, int height, int width) {
  Rng rng(seed);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    fs::create_directories(root / classes[c]);
    for (int i = 0; i < per_class; ++i) {
      cv::Mat img(height, width, CV_8UC3);
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          int v = 40 + 45 * static_cast<int>(c);
          if (c % 4 == 1 && x % 8 < 2) v = 250;
          if (c % 4 == 2 && y % 8 < 2) v = 250;
          if (c % 4 == 3 && y < height / 2) v = 230;
          v += static_cast<int>(rng.below(31)) - 15;
          v = std::clamp(v, 0, 255);
          img.at<cv::Vec3b>(y, x) = cv::Vec3b(static_cast<unsigned char>(v), static_cast<unsigned char>(v),
                                              static_cast<unsigned char>(std::clamp(v + 5, 0, 255)));
        }
      }
      cv::imwrite((root / classes[c] / fmt::format("img{:03d}.png", i)).string(), img);
    }
  }
}

fs::path write_run_config(const fs::path& dir, const std::string& extra_json) {
  write_toy_backbone(dir / "toy.backbone", 5);
  const auto path = dir / "config.json";
  std::ofstream out(path);
  out << "{\n  \"seed\": 17,\n  \"dataset_root\": \"data\",\n  \"backbone\": \"toy.backbone\",\n"
      << "  \"output_dir\": \"out\",\n  \"cv\": {\"folds\": 3},\n"
      << "  \"grids\": {\"bagged_trees\": {\"tree_count\": [15], \"min_leaf\": [1]},\n"
      << "            \"rbf_svm_ovo\": {\"C\": [1, 10], \"gamma_scale\": [1]}}" << extra_json << "\n}\n";
  return path;
}

ReferenceTable load_reference_table() {
  std::ifstream in(fs::path(DEBRIS_TEST_FIXTURES) / "reference_results.json");
  if (!in) throw std::runtime_error("missing reference_results.json");
  const auto doc = nlohmann::json::parse(in);
  ReferenceTable table;
  table.classes = doc.at("classes").get<std::vector<std::string>>();
  for (const auto& r : doc.at("results")) {
    ReferenceResult row{parse_family(r.at("family").get<std::string>()), r.at("accuracy").get<double>(),
                        r.at("macro_f1").get<double>(), {}};
    for (const auto& line : r.at("row_percent")) {
      std::vector<long> tenths;
      for (double v : line) tenths.push_back(std::lround(v * 10.0));
      row.row_percent_tenths.push_back(std::move(tenths));
    }
    table.results.push_back(std::move(row));
  }
  return table;
}

}  // namespace debris::testing
