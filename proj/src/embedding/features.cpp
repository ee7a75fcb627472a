#include "debris/features.hpp"

#include <fmt/format.h>

#include <cmath>

#include "debris/binio.hpp"
#include "debris/error.hpp"
#include "debris/sha256.hpp"

namespace debris {
namespace fs = std::filesystem;

void FeatureMatrix::validate() const {
  const auto n = rows();
  if (record_ids.size() != n) {
    fail(ErrorKind::DimensionError,
         fmt::format("{} rows but {} record ids", n, record_ids.size()));
  }
  if (!labels.empty() && labels.size() != n) {
    fail(ErrorKind::DimensionError, fmt::format("{} rows but {} labels", n, labels.size()));
  }
  if (!splits.empty() && splits.size() != n) {
    fail(ErrorKind::DimensionError, fmt::format("{} rows but {} split tags", n, splits.size()));
  }
  if (!X.allFinite()) fail(ErrorKind::NonFiniteEmbedding, "feature matrix has non-finite entries");
}

FeatureMatrix FeatureMatrix::select(std::span<const std::size_t> idx) const {
  FeatureMatrix out;
  out.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
  out.standardizer_hash = standardizer_hash;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.X.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(idx[i]));
    out.record_ids.push_back(record_ids.at(idx[i]));
    if (!labels.empty()) out.labels.push_back(labels[idx[i]]);
    if (!splits.empty()) out.splits.push_back(splits[idx[i]]);
  }
  return out;
}

std::vector<std::size_t> FeatureMatrix::rows_in(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

void tag_splits(FeatureMatrix& features, const DatasetManifest& manifest) {
  features.splits.clear();
  for (auto id : features.record_ids) features.splits.push_back(manifest.record(id).split);
}

Vector global_average_pool(std::span<const float> map, int channels, int height, int width) {
  if (channels < 0 || height < 1 || width < 1 ||
      map.size() != static_cast<std::size_t>(channels) * height * width) {
    fail(ErrorKind::DimensionError,
         fmt::format("feature map of {} values does not match {}x{}x{}", map.size(), channels,
                     height, width));
  }
  const auto plane = static_cast<std::size_t>(height) * width;
  Vector out(channels);
  for (int c = 0; c < channels; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum += map[c * plane + i];
    out[c] = sum / static_cast<double>(plane);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::string_view kParamsMagic = "DBSP";
constexpr std::uint32_t kParamsVersion = 1;
constexpr std::string_view kCacheMagic = "DBFC";
constexpr std::uint32_t kCacheVersion = 1;

std::string hex_to_bytes(const std::string& hex) {
  if (hex.size() != 64) fail(ErrorKind::FeatureCacheError, "backbone hash must be 64 hex digits");
  std::string out;
  for (std::size_t i = 0; i < 64; i += 2) {
    out.push_back(static_cast<char>(std::stoi(hex.substr(i, 2), nullptr, 16)));
  }
  return out;
}

std::string bytes_to_hex(std::string_view bytes) {
  std::string out;
  for (unsigned char c : bytes) out += fmt::format("{:02x}", c);
  return out;
}
}  // namespace

std::string StandardizationParams::serialize() const {
  ByteWriter w;
  w.raw(kParamsMagic);
  w.u32(kParamsVersion);
  w.u32(static_cast<std::uint32_t>(dims()));
  for (Eigen::Index d = 0; d < mu.size(); ++d) w.f64(mu[d]);
  for (Eigen::Index d = 0; d < sigma.size(); ++d) w.f64(sigma[d]);
  w.u32(static_cast<std::uint32_t>(constant_dims.size()));
  for (int d : constant_dims) w.u32(static_cast<std::uint32_t>(d));
  return std::move(w).take();
}

StandardizationParams StandardizationParams::deserialize(std::string_view bytes) {
  ByteReader r(bytes, ErrorKind::FeatureCacheError);
  if (r.raw(4) != kParamsMagic) fail(ErrorKind::FeatureCacheError, "not a standardizer file");
  if (r.u32() != kParamsVersion) fail(ErrorKind::FeatureCacheError, "unsupported standardizer version");
  const auto d = r.u32();
  StandardizationParams p;
  p.mu.resize(d);
  p.sigma.resize(d);
  for (std::uint32_t i = 0; i < d; ++i) p.mu[i] = r.f64();
  for (std::uint32_t i = 0; i < d; ++i) p.sigma[i] = r.f64();
  const auto k = r.u32();
  for (std::uint32_t i = 0; i < k; ++i) {
    const auto dim = r.u32();
    if (dim >= d) fail(ErrorKind::FeatureCacheError, "constant dim out of range");
    p.constant_dims.push_back(static_cast<int>(dim));
  }
  r.expect_end();
  return p;
}

std::string StandardizationParams::hash() const { return sha256_hex(serialize()); }

StandardizationParams fit_standardizer(const FeatureMatrix& train) {
  for (std::size_t i = 0; i < train.splits.size(); ++i) {
    if (train.splits[i] == Split::Validation || train.splits[i] == Split::Test) {
      fail(ErrorKind::SplitLeakage,
           fmt::format("row {} (record {}) belongs to the {} split; standardizer must be fit on "
                       "training rows only",
                       i, train.record_ids.at(i), to_string(train.splits[i])));
    }
  }
  const auto n = train.X.rows();
  if (n < 2) {
    fail(ErrorKind::InsufficientData, fmt::format("need at least 2 rows to standardize, got {}", n));
  }
  StandardizationParams p;
  p.mu = train.X.colwise().mean().transpose();
  p.sigma.resize(train.X.cols());
  for (Eigen::Index d = 0; d < train.X.cols(); ++d) {
    const double var = (train.X.col(d).array() - p.mu[d]).square().sum() / static_cast<double>(n);
    p.sigma[d] = std::sqrt(var);
    if (p.sigma[d] == 0.0) p.constant_dims.push_back(static_cast<int>(d));
  }
  return p;
}

FeatureMatrix apply_standardizer(const StandardizationParams& params, const FeatureMatrix& features) {
  if (features.dims() != params.dims()) {
    fail(ErrorKind::DimensionError, fmt::format("features have {} columns, standardizer expects {}",
                                                features.dims(), params.dims()));
  }
  FeatureMatrix out = features;
  for (Eigen::Index d = 0; d < out.X.cols(); ++d) {
    if (params.sigma[d] == 0.0) {
      out.X.col(d).setZero();
    } else {
      out.X.col(d) = (out.X.col(d).array() - params.mu[d]) / params.sigma[d];
    }
  }
  out.standardizer_hash = params.hash();
  return out;
}

FeatureMatrix invert_standardizer(const StandardizationParams& params, const FeatureMatrix& features) {
  if (features.dims() != params.dims()) {
    fail(ErrorKind::DimensionError, "dimension mismatch in invert_standardizer");
  }
  FeatureMatrix out = features;
  for (Eigen::Index d = 0; d < out.X.cols(); ++d) {
    out.X.col(d) = out.X.col(d).array() * params.sigma[d] + params.mu[d];
  }
  out.standardizer_hash.clear();
  return out;
}

void save_standardizer(const StandardizationParams& params, const fs::path& path) {
  write_file_atomic(path, params.serialize());
}

StandardizationParams load_standardizer(const fs::path& path) {
  return StandardizationParams::deserialize(read_file(path));
}

// ---------------------------------------------------------------------------

void save_feature_cache(const FeatureCache& cache, const fs::path& path) {
  const auto& f = cache.features;
  f.validate();
  const auto n = f.rows();
  if (cache.variants.size() != n) fail(ErrorKind::FeatureCacheError, "variant array misaligned");
  ByteWriter w;
  w.raw(kCacheMagic);
  w.u32(kCacheVersion);
  w.u32(static_cast<std::uint32_t>(f.dims()));
  w.u64(n);
  w.raw(hex_to_bytes(cache.backbone_sha256));
  for (Eigen::Index i = 0; i < f.X.rows(); ++i) {
    for (Eigen::Index d = 0; d < f.X.cols(); ++d) w.f32(static_cast<float>(f.X(i, d)));
  }
  for (auto id : f.record_ids) w.i64(id);
  for (std::size_t i = 0; i < n; ++i) w.i32(f.labels.empty() ? -1 : f.labels[i]);
  for (auto v : cache.variants) w.u8(v);
  write_file_atomic(path, w.bytes());
}

FeatureCache load_feature_cache(const fs::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::FeatureCacheError, e.detail());
  }
  ByteReader r(bytes, ErrorKind::FeatureCacheError);
  if (r.raw(4) != kCacheMagic) fail(ErrorKind::FeatureCacheError, "not a feature cache");
  if (r.u32() != kCacheVersion) fail(ErrorKind::FeatureCacheError, "unsupported cache version");
  const auto d = r.u32();
  const auto n = r.u64();
  FeatureCache cache;
  cache.backbone_sha256 = bytes_to_hex(r.raw(32));
  // Guard the allocation against a corrupted header.
  if (n > 0 && r.remaining() / n < static_cast<std::uint64_t>(d) * 4 + 13) {
    fail(ErrorKind::FeatureCacheError, "header row count exceeds payload");
  }
  auto& f = cache.features;
  f.X.resize(static_cast<Eigen::Index>(n), d);
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint32_t k = 0; k < d; ++k) f.X(static_cast<Eigen::Index>(i), k) = r.f32();
  }
  f.record_ids.resize(n);
  for (auto& id : f.record_ids) id = r.i64();
  bool labeled = true;
  std::vector<int> labels(n);
  for (auto& l : labels) {
    l = r.i32();
    if (l < 0) labeled = false;
  }
  if (labeled) f.labels = std::move(labels);
  cache.variants.resize(n);
  for (auto& v : cache.variants) v = r.u8();
  r.expect_end();
  if (!f.X.allFinite()) fail(ErrorKind::FeatureCacheError, "cache contains non-finite values");
  return cache;
}

}  // namespace debris
