#include "debris/dataset.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <map>
#include <numeric>
#include <sstream>

#include "debris/binio.hpp"
#include "debris/error.hpp"
#include "debris/rng.hpp"

namespace debris {
namespace fs = std::filesystem;

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::Unassigned: return "unassigned";
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "unassigned";
}

Split parse_split(std::string_view text) {
  for (auto s : {Split::Unassigned, Split::Train, Split::Validation, Split::Test}) {
    if (text == to_string(s)) return s;
  }
  fail(ErrorKind::ManifestParseError, "unknown split '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Fraction

namespace {

std::int64_t parse_int(std::string_view text, ErrorKind kind, std::string_view what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    fail(kind, fmt::format("invalid {} '{}'", what, text));
  }
  return v;
}

}  // namespace

Fraction Fraction::parse(std::string_view text) {
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    Fraction f{parse_int(text.substr(0, slash), ErrorKind::ConfigError, "fraction"),
               parse_int(text.substr(slash + 1), ErrorKind::ConfigError, "fraction")};
    if (f.den <= 0) fail(ErrorKind::ConfigError, "fraction denominator must be positive");
    return f.reduced();
  }
  auto dot = text.find('.');
  if (dot == std::string_view::npos) {
    return Fraction{parse_int(text, ErrorKind::ConfigError, "fraction"), 1};
  }
  auto whole = text.substr(0, dot);
  auto decimals = text.substr(dot + 1);
  if (decimals.size() > 15) fail(ErrorKind::ConfigError, "too many decimals in fraction");
  std::int64_t den = 1;
  for (std::size_t i = 0; i < decimals.size(); ++i) den *= 10;
  const std::int64_t w = whole.empty() ? 0 : parse_int(whole, ErrorKind::ConfigError, "fraction");
  const std::int64_t d =
      decimals.empty() ? 0 : parse_int(decimals, ErrorKind::ConfigError, "fraction");
  return Fraction{w * den + d, den}.reduced();
}

Fraction Fraction::reduced() const {
  const auto g = std::gcd(num, den);
  return g == 0 ? *this : Fraction{num / g, den / g};
}

std::string Fraction::str() const {
  auto r = reduced();
  return r.den == 1 ? std::to_string(r.num) : fmt::format("{}/{}", r.num, r.den);
}

bool Fraction::operator==(const Fraction& other) const {
  return num * other.den == other.num * den;
}

void SplitFractions::validate() const {
  for (const auto& f : {train, validation, test}) {
    if (f.den <= 0 || f.num <= 0) fail(ErrorKind::ConfigError, "split fractions must be positive");
  }
  // a/b + c/d + e/f == 1 using a common denominator.
  const auto den = train.den * validation.den * test.den;
  const auto num = train.num * validation.den * test.den + validation.num * train.den * test.den +
                   test.num * train.den * validation.den;
  if (num != den) {
    fail(ErrorKind::ConfigError, fmt::format("split fractions {} + {} + {} do not sum to 1",
                                             train.str(), validation.str(), test.str()));
  }
}

// ---------------------------------------------------------------------------
// Manifest accessors

const ImageRecord& DatasetManifest::record(std::int64_t record_id) const {
  if (record_id >= 0 && static_cast<std::size_t>(record_id) < records.size() &&
      records[static_cast<std::size_t>(record_id)].record_id == record_id) {
    return records[static_cast<std::size_t>(record_id)];
  }
  auto it = std::find_if(records.begin(), records.end(),
                         [&](const ImageRecord& r) { return r.record_id == record_id; });
  if (it == records.end()) {
    fail(ErrorKind::DimensionError, fmt::format("record_id {} not in manifest", record_id));
  }
  return *it;
}

std::vector<std::string> DatasetManifest::class_names() const {
  std::vector<std::string> names;
  for (const auto& c : classes) names.push_back(c.name);
  return names;
}

std::size_t DatasetManifest::count(Split split) const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [&](const auto& r) { return r.split == split; }));
}

// ---------------------------------------------------------------------------
// Scanning

bool is_image_file(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

DatasetManifest scan_directory(const fs::path& root, const ScanOptions& options) {
  if (!fs::is_directory(root)) {
    fail(ErrorKind::NoImagesFound, "dataset root '" + root.string() + "' is not a directory");
  }
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename().string().front() != '.') {
      class_dirs.push_back(entry.path());
    }
  }
  std::sort(class_dirs.begin(), class_dirs.end());

  DatasetManifest manifest;
  manifest.root = root;
  std::vector<ImageRecord> records;
  for (const auto& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) {
        files.push_back(fs::relative(entry.path(), root));
      }
    }
    const auto name = dir.filename().string();
    if (files.empty()) {
      if (options.empty_class_is_error) {
        fail(ErrorKind::EmptyClass, "class directory '" + name + "' contains no images");
      }
      const auto msg = "EmptyClass: class directory '" + name + "' contains no images; skipped";
      if (options.on_warning) options.on_warning(msg);
      continue;
    }
    const int id = static_cast<int>(manifest.classes.size());
    manifest.classes.push_back(ClassLabel{id, name});
    for (auto& f : files) records.push_back(ImageRecord{0, std::move(f), id, Split::Unassigned});
  }
  if (records.empty()) {
    fail(ErrorKind::NoImagesFound, "no images under '" + root.string() + "'");
  }
  std::sort(records.begin(), records.end(), [](const ImageRecord& a, const ImageRecord& b) {
    return a.path.generic_string() < b.path.generic_string();
  });
  for (std::size_t i = 0; i < records.size(); ++i) records[i].record_id = static_cast<std::int64_t>(i);
  manifest.records = std::move(records);
  return manifest;
}

// ---------------------------------------------------------------------------
// Splitting

SplitCounts split_counts(std::int64_t n, const SplitFractions& fractions) {
  fractions.validate();
  SplitCounts counts;
  counts.train = n * fractions.train.num / fractions.train.den;
  const auto remainder = n - counts.train;
  // Share of the remainder owed to validation: v / (v + t), rounded up.
  const auto& v = fractions.validation;
  const auto& t = fractions.test;
  const auto share_num = v.num * t.den;
  const auto share_den = v.num * t.den + t.num * v.den;
  counts.validation = (remainder * share_num + share_den - 1) / share_den;
  counts.test = remainder - counts.validation;
  return counts;
}

DatasetManifest stratified_split(DatasetManifest manifest, const SplitFractions& fractions,
                                 std::uint64_t seed) {
  fractions.validate();
  if (manifest.classes.size() < 2) {
    fail(ErrorKind::TooFewClasses,
         fmt::format("need at least 2 classes, manifest has {}", manifest.classes.size()));
  }
  std::vector<std::vector<std::size_t>> members(manifest.classes.size());
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto label = manifest.records[i].label;
    if (label < 0 || static_cast<std::size_t>(label) >= members.size()) {
      fail(ErrorKind::ManifestParseError, fmt::format("record {} has unknown class id {}",
                                                      manifest.records[i].record_id, label));
    }
    members[static_cast<std::size_t>(label)].push_back(i);
  }
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto& idx = members[c];
    if (idx.size() < 3) {
      fail(ErrorKind::ClassTooSmall, fmt::format("class '{}' has {} records, need at least 3",
                                                 manifest.classes[c].name, idx.size()));
    }
    // Membership order is record order (sorted by path), so the permutation
    // depends only on (seed, class id, manifest contents).
    Rng rng(derive_seed(seed, c));
    rng.shuffle(std::span(idx));
    const auto counts = split_counts(static_cast<std::int64_t>(idx.size()), fractions);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto pos = static_cast<std::int64_t>(k);
      auto& rec = manifest.records[idx[k]];
      rec.split = pos < counts.train                        ? Split::Train
                  : pos < counts.train + counts.validation ? Split::Validation
                                                            : Split::Test;
    }
  }
  manifest.split_seed = seed;
  manifest.split_fractions = fractions;
  return manifest;
}

// ---------------------------------------------------------------------------
// Manifest file
//
//   debris-manifest 1
//   root <path>
//   seed <u64>
//   fractions <train> <validation> <test>
//   classes <K>
//   class <id> <name>            (K lines)
//   records <N>
//   <record_id>\t<relative path>\t<class name>\t<split>   (N lines)

namespace {

constexpr std::string_view kManifestMagic = "debris-manifest";
constexpr int kManifestVersion = 1;

class LineCursor {
 public:
  explicit LineCursor(std::string_view text) : text_(text) {}

  std::string_view next(std::string_view expecting) {
    if (pos_ >= text_.size()) {
      fail(ErrorKind::ManifestParseError,
           fmt::format("line {}: unexpected end of file, expected {}", line_ + 1, expecting));
    }
    auto end = text_.find('\n', pos_);
    if (end == std::string_view::npos) end = text_.size();
    auto line = text_.substr(pos_, end - pos_);
    pos_ = end + 1;
    ++line_;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
  }

  bool at_end() const { return pos_ >= text_.size(); }
  int line() const { return line_; }

  [[noreturn]] void error(const std::string& msg) const {
    fail(ErrorKind::ManifestParseError, fmt::format("line {}: {}", line_, msg));
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 0;
};

std::string_view expect_key(LineCursor& cur, std::string_view key) {
  auto line = cur.next(key);
  if (line.substr(0, key.size()) != key || line.size() < key.size() + 1 || line[key.size()] != ' ') {
    cur.error(fmt::format("expected '{} ...', got '{}'", key, line));
  }
  return line.substr(key.size() + 1);
}

std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto p = s.find(sep, start);
    parts.push_back(s.substr(start, p == std::string_view::npos ? s.npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return parts;
}

}  // namespace

std::string serialize_manifest(const DatasetManifest& m) {
  std::string out;
  out += fmt::format("{} {}\n", kManifestMagic, kManifestVersion);
  out += fmt::format("root {}\n", m.root.generic_string());
  out += fmt::format("seed {}\n", m.split_seed);
  out += fmt::format("fractions {} {} {}\n", m.split_fractions.train.str(),
                     m.split_fractions.validation.str(), m.split_fractions.test.str());
  out += fmt::format("classes {}\n", m.classes.size());
  for (const auto& c : m.classes) out += fmt::format("class {} {}\n", c.id, c.name);
  out += fmt::format("records {}\n", m.records.size());
  for (const auto& r : m.records) {
    out += fmt::format("{}\t{}\t{}\t{}\n", r.record_id, r.path.generic_string(),
                       m.classes.at(static_cast<std::size_t>(r.label)).name, to_string(r.split));
  }
  return out;
}

DatasetManifest parse_manifest(std::string_view text) {
  LineCursor cur(text);
  DatasetManifest m;
  {
    auto version = expect_key(cur, kManifestMagic);
    if (version != std::to_string(kManifestVersion)) {
      cur.error(fmt::format("unsupported manifest version '{}'", version));
    }
  }
  m.root = fs::path(std::string(expect_key(cur, "root")));
  {
    auto seed = expect_key(cur, "seed");
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(seed.data(), seed.data() + seed.size(), v);
    if (ec != std::errc{} || ptr != seed.data() + seed.size()) cur.error("invalid seed");
    m.split_seed = v;
  }
  {
    auto parts = split_on(expect_key(cur, "fractions"), ' ');
    if (parts.size() != 3) cur.error("fractions needs three values");
    try {
      m.split_fractions = {Fraction::parse(parts[0]), Fraction::parse(parts[1]),
                           Fraction::parse(parts[2])};
    } catch (const Error& e) {
      cur.error(e.detail());
    }
  }
  const auto class_count = parse_int(expect_key(cur, "classes"), ErrorKind::ManifestParseError,
                                     fmt::format("class count on line {}", cur.line()));
  std::map<std::string, int, std::less<>> by_name;
  for (std::int64_t k = 0; k < class_count; ++k) {
    auto rest = expect_key(cur, "class");
    auto space = rest.find(' ');
    if (space == std::string_view::npos) cur.error("class line needs '<id> <name>'");
    const auto id = parse_int(rest.substr(0, space), ErrorKind::ManifestParseError,
                              fmt::format("class id on line {}", cur.line()));
    if (id != k) cur.error(fmt::format("class ids must be contiguous, expected {}", k));
    std::string name(rest.substr(space + 1));
    if (name.empty() || by_name.count(name)) cur.error("empty or duplicate class name");
    by_name.emplace(name, static_cast<int>(id));
    m.classes.push_back(ClassLabel{static_cast<int>(id), std::move(name)});
  }
  const auto record_count = parse_int(expect_key(cur, "records"), ErrorKind::ManifestParseError,
                                      fmt::format("record count on line {}", cur.line()));
  std::vector<std::int64_t> seen;
  for (std::int64_t k = 0; k < record_count; ++k) {
    auto fields = split_on(cur.next("record"), '\t');
    if (fields.size() != 4) cur.error(fmt::format("record needs 4 tab-separated fields, got {}", fields.size()));
    ImageRecord r;
    r.record_id = parse_int(fields[0], ErrorKind::ManifestParseError,
                            fmt::format("record_id on line {}", cur.line()));
    if (fields[1].empty()) cur.error("empty record path");
    r.path = fs::path(std::string(fields[1]));
    auto it = by_name.find(fields[2]);
    if (it == by_name.end()) cur.error(fmt::format("record references unknown class '{}'", fields[2]));
    r.label = it->second;
    try {
      r.split = parse_split(fields[3]);
    } catch (const Error& e) {
      cur.error(e.detail());
    }
    seen.push_back(r.record_id);
    m.records.push_back(std::move(r));
  }
  while (!cur.at_end()) {
    if (!cur.next("end of file").empty()) cur.error("unexpected content after records");
  }
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
    fail(ErrorKind::ManifestParseError, "duplicate record_id");
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  write_file_atomic(path, serialize_manifest(manifest));
}

DatasetManifest load_manifest(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::ManifestParseError, e.detail());
  }
  return parse_manifest(text);
}

std::string render_split_table(const DatasetManifest& m) {
  std::vector<std::array<std::size_t, 3>> counts(m.classes.size(), {0, 0, 0});
  for (const auto& r : m.records) {
    auto& row = counts.at(static_cast<std::size_t>(r.label));
    if (r.split == Split::Train) ++row[0];
    if (r.split == Split::Validation) ++row[1];
    if (r.split == Split::Test) ++row[2];
  }
  std::size_t width = 5;
  for (const auto& c : m.classes) width = std::max(width, c.name.size());
  std::string out = fmt::format("{:<{}}  {:>10}  {:>10}  {:>10}  {:>6}\n", "Class", width,
                                "Training", "Validation", "Testing", "Total");
  std::array<std::size_t, 3> totals{0, 0, 0};
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const auto& row = counts[c];
    out += fmt::format("{:<{}}  {:>10}  {:>10}  {:>10}  {:>6}\n", m.classes[c].name, width, row[0],
                       row[1], row[2], row[0] + row[1] + row[2]);
    for (int k = 0; k < 3; ++k) totals[k] += row[k];
  }
  out += fmt::format("{:<{}}  {:>10}  {:>10}  {:>10}  {:>6}\n", "Total", width, totals[0],
                     totals[1], totals[2], totals[0] + totals[1] + totals[2]);
  return out;
}

}  // namespace debris
