#include "debris/config.hpp"

#include <fmt/format.h>

#include <json.hpp>
#include <set>

#include "debris/binio.hpp"
#include "debris/error.hpp"
#include "debris/rng.hpp"

namespace debris {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  fail(ErrorKind::ConfigError, fmt::format("config key '{}': {}", key, why));
}

void check_keys(const Json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) bad(where, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) bad(where.empty() ? key : where + "." + key, "unknown key");
  }
}

double number(const Json& j, const std::string& key) {
  if (!j.is_number()) bad(key, "expected a number");
  return j.get<double>();
}

int integer(const Json& j, const std::string& key, int lo) {
  if (!j.is_number_integer()) bad(key, "expected an integer");
  const auto v = j.get<std::int64_t>();
  if (v < lo || v > 1'000'000) bad(key, fmt::format("must be at least {}", lo));
  return static_cast<int>(v);
}

fs::path path_value(const Json& j, const std::string& key) {
  if (!j.is_string() || j.get<std::string>().empty()) bad(key, "expected a non-empty path string");
  return fs::path(j.get<std::string>());
}

Fraction fraction(const Json& j, const std::string& key) {
  try {
    if (j.is_string()) return Fraction::parse(j.get<std::string>());
    if (j.is_number()) return Fraction::parse(j.dump());
  } catch (const Error& e) {
    bad(key, e.detail());
  }
  bad(key, "expected a fraction such as \"7/10\" or 0.7");
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return (p.is_absolute() ? p : base / p).lexically_normal();
}

}  // namespace

fs::path RunConfig::model_path(Family family) const {
  return artifact(models_dir / (std::string(family_key(family)) + ".dbmd"));
}

std::uint64_t RunConfig::split_seed() const { return derive_seed(seed, 1); }
std::uint64_t RunConfig::augmentation_seed() const { return derive_seed(seed, 2); }
std::uint64_t RunConfig::cv_seed() const { return derive_seed(seed, 3); }

HyperGrid RunConfig::grid_for(Family family, double gamma0) const {
  for (const auto& g : grids) {
    if (g.family != family) continue;
    HyperGrid out;
    for (const auto& [name, values] : g.grid) {
      if (family == Family::RbfSvmOvo && name == "gamma_scale") {
        std::vector<double> gammas;
        for (double s : values) gammas.push_back(s * gamma0);
        out.emplace_back("gamma", gammas);
      } else {
        out.emplace_back(name, values);
      }
    }
    return out;
  }
  return default_grid(family, gamma0);
}

RunConfig parse_config(const std::string& json_text, const fs::path& config_dir, const ConfigOverrides& overrides) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ConfigError, fmt::format("config is not valid JSON: {}", e.what()));
  }
  check_keys(j, "",
             {"seed", "dataset_root", "backbone", "output_dir", "jobs", "split", "empty_class_is_error",
              "augmentation", "cv", "families", "grids", "artifacts"});

  RunConfig c;
  c.config_dir = config_dir;
  if (overrides.seed) {
    c.seed = *overrides.seed;
  } else {
    if (!j.contains("seed")) bad("seed", "required (no implicit seeds)");
    if (!j["seed"].is_number_unsigned()) bad("seed", "expected a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (!j.contains("dataset_root")) bad("dataset_root", "required");
  c.dataset_root = resolve(config_dir, path_value(j["dataset_root"], "dataset_root"));
  if (!j.contains("backbone")) bad("backbone", "required");
  c.backbone = resolve(config_dir, path_value(j["backbone"], "backbone"));
  if (overrides.output_dir) {
    c.output_dir = overrides.output_dir->lexically_normal();
  } else {
    c.output_dir = resolve(config_dir, j.contains("output_dir") ? path_value(j["output_dir"], "output_dir")
                                                                : fs::path("out"));
  }
  if (overrides.jobs) {
    c.jobs = *overrides.jobs;
    if (c.jobs < 1) bad("jobs", "must be at least 1");
  } else if (j.contains("jobs")) {
    c.jobs = integer(j["jobs"], "jobs", 1);
  }

  if (j.contains("split")) {
    const auto& s = j["split"];
    check_keys(s, "split", {"train", "validation", "test"});
    if (s.contains("train")) c.fractions.train = fraction(s["train"], "split.train");
    if (s.contains("validation")) c.fractions.validation = fraction(s["validation"], "split.validation");
    if (s.contains("test")) c.fractions.test = fraction(s["test"], "split.test");
  }
  try {
    c.fractions.validate();
  } catch (const Error& e) {
    bad("split", e.detail());
  }
  if (j.contains("empty_class_is_error")) {
    if (!j["empty_class_is_error"].is_boolean()) bad("empty_class_is_error", "expected true or false");
    c.empty_class_is_error = j["empty_class_is_error"].get<bool>();
  }

  if (j.contains("augmentation")) {
    const auto& a = j["augmentation"];
    check_keys(a, "augmentation", {"horizontal_flip_prob", "scale_range", "rotation_range", "copies_per_image"});
    auto& p = c.augmentation;
    if (a.contains("horizontal_flip_prob"))
      p.horizontal_flip_prob = number(a["horizontal_flip_prob"], "augmentation.horizontal_flip_prob");
    if (a.contains("scale_range")) p.scale_range = number(a["scale_range"], "augmentation.scale_range");
    if (a.contains("rotation_range")) p.rotation_range = number(a["rotation_range"], "augmentation.rotation_range");
    if (a.contains("copies_per_image"))
      p.copies_per_image = integer(a["copies_per_image"], "augmentation.copies_per_image", 0);
  }
  c.augmentation.seed = c.augmentation_seed();
  try {
    c.augmentation.validate();
  } catch (const Error& e) {
    bad("augmentation", e.detail());
  }

  if (j.contains("cv")) {
    check_keys(j["cv"], "cv", {"folds"});
    if (j["cv"].contains("folds")) c.folds = integer(j["cv"]["folds"], "cv.folds", 2);
  }

  if (j.contains("families")) {
    const auto& f = j["families"];
    if (!f.is_array() || f.empty()) bad("families", "expected a non-empty list of family names");
    c.families.clear();
    std::set<Family> seen;
    for (const auto& item : f) {
      if (!item.is_string()) bad("families", "expected family names");
      Family fam;
      try {
        fam = parse_family(item.get<std::string>());
      } catch (const Error& e) {
        bad("families", e.detail());
      }
      if (!seen.insert(fam).second) bad("families", fmt::format("'{}' listed twice", family_key(fam)));
      c.families.push_back(fam);
    }
  }

  if (j.contains("grids")) {
    const auto& g = j["grids"];
    if (!g.is_object()) bad("grids", "expected an object keyed by family");
    for (const auto& [fam_key, params] : g.items()) {
      const std::string where = "grids." + fam_key;
      FamilySearch search{};
      try {
        search.family = parse_family(fam_key);
      } catch (const Error& e) {
        bad(where, e.detail());
      }
      if (!params.is_object() || params.empty()) bad(where, "expected an object of candidate lists");
      ClassifierSpec probe{search.family, {}, 0};
      for (const auto& [name, values] : params.items()) {
        if (!values.is_array() || values.empty()) bad(where + "." + name, "expected a non-empty list");
        std::vector<double> candidates;
        for (const auto& v : values) candidates.push_back(number(v, where + "." + name));
        const bool scale = search.family == Family::RbfSvmOvo && name == "gamma_scale";
        for (double v : candidates) {
          probe.hyperparameters = {{scale ? "gamma" : name, v}};
          try {
            probe.validate();
          } catch (const Error& e) {
            bad(where + "." + name, e.detail());
          }
        }
        search.grid.emplace_back(name, candidates);
      }
      c.grids.push_back(std::move(search));
    }
  }

  if (j.contains("artifacts")) {
    const auto& a = j["artifacts"];
    check_keys(a, "artifacts", {"manifest", "features", "standardizer", "models", "report", "confusion_csv"});
    auto set = [&](const char* key, fs::path& field) {
      if (a.contains(key)) field = path_value(a[key], std::string("artifacts.") + key);
    };
    set("manifest", c.manifest_file);
    set("features", c.features_file);
    set("standardizer", c.standardizer_file);
    set("models", c.models_dir);
    set("report", c.report_file);
    set("confusion_csv", c.confusion_csv_file);
  }
  return c;
}

RunConfig load_config(const fs::path& path, const ConfigOverrides& overrides) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::ConfigError, fmt::format("cannot read config: {}", e.detail()));
  }
  const auto dir = fs::absolute(path).parent_path();
  return parse_config(text, dir, overrides);
}

}  // namespace debris
