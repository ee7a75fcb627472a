#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fmt/format.h>

#include <fstream>
#include <set>

#include "debris/binio.hpp"
#include "debris/dataset.hpp"
#include "support.hpp"

using namespace debris;
namespace fs = std::filesystem;
using debris::testing::TempDir;

namespace {

const std::vector<std::string> kClasses = {"Ceramic-Tile", "Concrete", "Trash-Waste", "Wood"};

void touch(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << "x";
}

// In-memory manifest with `per_class` records per class, no files needed.
DatasetManifest synthetic_manifest(int classes, int per_class) {
  DatasetManifest m;
  m.root = "/data";
  std::int64_t id = 0;
  for (int c = 0; c < classes; ++c) {
    m.classes.push_back({c, "class" + std::to_string(c)});
    for (int i = 0; i < per_class; ++i) {
      m.records.push_back({id++, fs::path("class" + std::to_string(c)) / ("img" + std::to_string(i) + ".png"), c,
                           Split::Unassigned});
    }
  }
  return m;
}

// Independent restatement of the rounding rule for equal validation/test shares.
SplitCounts expected_counts(std::int64_t n) {
  const std::int64_t train = (n * 7) / 10;
  const std::int64_t rest = n - train;
  const std::int64_t validation = (rest + 1) / 2;
  return {train, validation, rest - validation};
}

}  // namespace

TEST_CASE("scan_directory builds one record per image, sorted by path") {
  TempDir dir;
  for (const auto& c : kClasses)
    for (int i = 0; i < 450; ++i) touch(dir / "data" / c / fmt::format("{:04d}.jpg", i));
  const auto m = scan_directory(dir / "data");
  CHECK(m.records.size() == 1800);
  REQUIRE(m.classes.size() == 4);
  for (int c = 0; c < 4; ++c) {
    CHECK(m.classes[c].id == c);
    CHECK(m.classes[c].name == kClasses[c]);
  }
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    CHECK(m.records[i].record_id == static_cast<std::int64_t>(i));
    CHECK(m.records[i].split == Split::Unassigned);
    if (i) CHECK(m.records[i - 1].path < m.records[i].path);
  }
}

TEST_CASE("scan_directory ignores non-image files") {
  TempDir dir;
  touch(dir / "data/A/a.jpg");
  touch(dir / "data/A/b.PNG");
  touch(dir / "data/A/notes.txt");
  touch(dir / "data/B/c.jpeg");
  const auto m = scan_directory(dir / "data");
  CHECK(m.records.size() == 3);
}

TEST_CASE("single class with one image scans, then split rejects it") {
  TempDir dir;
  touch(dir / "data/A/a.png");
  const auto m = scan_directory(dir / "data");
  CHECK(m.records.size() == 1);
  CHECK(m.classes.size() == 1);
  CHECK_THROWS_AS(stratified_split(m, {}, 1), Error);
}

TEST_CASE("scan errors") {
  TempDir dir;
  SUBCASE("missing root") {
    try {
      scan_directory(dir / "nope");
      FAIL("expected NoImagesFound");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NoImagesFound);
    }
  }
  SUBCASE("empty root") {
    fs::create_directories(dir / "empty");
    try {
      scan_directory(dir / "empty");
      FAIL("expected NoImagesFound");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NoImagesFound);
    }
  }
  SUBCASE("empty class directory warns by default, errors when configured") {
    touch(dir / "data/A/a.png");
    touch(dir / "data/B/readme.txt");
    std::vector<std::string> warnings;
    ScanOptions opts;
    opts.on_warning = [&](const std::string& w) { warnings.push_back(w); };
    const auto m = scan_directory(dir / "data", opts);
    CHECK(m.classes.size() == 1);
    CHECK(warnings.size() == 1);
    opts.empty_class_is_error = true;
    try {
      scan_directory(dir / "data", opts);
      FAIL("expected EmptyClass");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::EmptyClass);
    }
  }
}

TEST_CASE("450 per class gives 315/68/67 and 1260/272/268 totals") {
  const auto m = stratified_split(synthetic_manifest(4, 450), {}, 42);
  for (int c = 0; c < 4; ++c) {
    int t = 0, v = 0, s = 0;
    for (const auto& r : m.records) {
      if (r.label != c) continue;
      t += r.split == Split::Train;
      v += r.split == Split::Validation;
      s += r.split == Split::Test;
    }
    CHECK(t == 315);
    CHECK(v == 68);
    CHECK(s == 67);
  }
  CHECK(m.count(Split::Train) == 1260);
  CHECK(m.count(Split::Validation) == 272);
  CHECK(m.count(Split::Test) == 268);
  CHECK(m.count(Split::Unassigned) == 0);
}

TEST_CASE("split_counts follows the rounding rule") {
  const auto ten = split_counts(10, {});
  CHECK(ten.train == 7);
  CHECK(ten.validation == 2);
  CHECK(ten.test == 1);
  for (std::int64_t n = 3; n <= 500; ++n) {
    const auto got = split_counts(n, {});
    const auto want = expected_counts(n);
    CHECK(got.train == want.train);
    CHECK(got.validation == want.validation);
    CHECK(got.test == want.test);
    // Stratification bound: within one of the exact share plus rounding slack.
    CHECK(std::abs(static_cast<double>(got.train) - 0.7 * n) < 1.0);
    CHECK(std::abs(static_cast<double>(got.validation) - 0.15 * n) < 2.0);
  }
}

TEST_CASE("decimal and rational fractions agree") {
  CHECK(Fraction::parse("0.70") == Fraction{7, 10});
  CHECK(Fraction::parse("7/10") == Fraction{7, 10});
  CHECK(Fraction::parse("14/20") == Fraction{7, 10});
  CHECK_THROWS_AS(Fraction::parse("x"), Error);
  SplitFractions bad;
  bad.test = {1, 10};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("split partitions every record and is deterministic") {
  const auto base = synthetic_manifest(3, 40);
  const auto a = stratified_split(base, {}, 7);
  const auto b = stratified_split(base, {}, 7);
  CHECK(serialize_manifest(a) == serialize_manifest(b));
  const auto c = stratified_split(base, {}, 8);
  bool differs = false;
  for (std::size_t i = 0; i < a.records.size(); ++i) differs = differs || a.records[i].split != c.records[i].split;
  CHECK(differs);
  for (const auto& r : a.records) CHECK(r.split != Split::Unassigned);
  CHECK(a.count(Split::Train) + a.count(Split::Validation) + a.count(Split::Test) == a.records.size());
}

TEST_CASE("class smaller than 3 is rejected") {
  auto m = synthetic_manifest(2, 5);
  m.records.erase(m.records.begin() + 2, m.records.begin() + 5);  // class 0 keeps 2
  try {
    stratified_split(m, {}, 1);
    FAIL("expected ClassTooSmall");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ClassTooSmall);
  }
}

TEST_CASE("manifest round trip and parse errors") {
  TempDir dir;
  const auto m = stratified_split(synthetic_manifest(4, 450), {}, 3);
  save_manifest(m, dir / "m.txt");
  const auto loaded = load_manifest(dir / "m.txt");
  CHECK(loaded == m);

  const auto text = read_file(dir / "m.txt");
  auto expect_parse_error = [](std::string_view t) {
    try {
      parse_manifest(t);
      FAIL("expected ManifestParseError");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ManifestParseError);
    }
  };
  SUBCASE("truncated") { expect_parse_error(std::string_view(text).substr(0, text.size() / 2)); }
  SUBCASE("unknown class in a record") {
    auto broken = text;
    const auto pos = broken.find("\tclass2\t");
    REQUIRE(pos != std::string::npos);
    broken.replace(pos, 8, "\tclass9\t");
    expect_parse_error(broken);
  }
  SUBCASE("error carries the line number") {
    auto broken = text;
    broken.replace(broken.find("\tvalidation"), 11, "\tsideways");
    try {
      parse_manifest(broken);
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
  }
}

TEST_CASE("split table layout") {
  const auto m = stratified_split(synthetic_manifest(4, 450), {}, 3);
  const auto table = render_split_table(m);
  CHECK(table.find("315") != std::string::npos);
  CHECK(table.find("1260") != std::string::npos);
  CHECK(table.find("1800") != std::string::npos);
}
