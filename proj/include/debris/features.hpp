#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "debris/dataset.hpp"
#include "debris/types.hpp"

namespace debris {

inline constexpr int kEmbeddingDim = 2048;

/// N x D embeddings with row-aligned metadata. `labels` and `splits` may be
/// empty (unlabeled prediction input); `standardizer_hash` is empty for raw
/// features and names the StandardizationParams applied otherwise.
struct FeatureMatrix {
  Matrix X;
  std::vector<int> labels;
  std::vector<std::int64_t> record_ids;
  std::vector<Split> splits;
  std::string standardizer_hash;

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(X.cols()); }
  bool labeled() const { return !labels.empty() || X.rows() == 0; }

  /// Throws DimensionError on misaligned metadata, NonFiniteEmbedding on
  /// NaN/inf entries.
  void validate() const;
  FeatureMatrix select(std::span<const std::size_t> rows) const;
  std::vector<std::size_t> rows_in(Split split) const;
};

/// Attaches split tags by looking each record id up in the manifest.
void tag_splits(FeatureMatrix& features, const DatasetManifest& manifest);

struct StandardizationParams {
  Vector mu;
  /// Population standard deviation (divide by N).
  Vector sigma;
  std::vector<int> constant_dims;

  std::size_t dims() const { return static_cast<std::size_t>(mu.size()); }
  std::string serialize() const;
  static StandardizationParams deserialize(std::string_view bytes);
  /// SHA-256 of `serialize()`; the provenance tag stamped on standardized matrices.
  std::string hash() const;
};

/// out[c] = mean over the h x w positions of channel c.
Vector global_average_pool(std::span<const float> feature_map, int channels, int height, int width);

/// Fits on every row of `train`. Rows tagged Validation or Test raise
/// SplitLeakage; fewer than two rows raise InsufficientData.
StandardizationParams fit_standardizer(const FeatureMatrix& train);
FeatureMatrix apply_standardizer(const StandardizationParams& params, const FeatureMatrix& features);
/// Undoes apply_standardizer on non-constant dims (constant dims get mu).
FeatureMatrix invert_standardizer(const StandardizationParams& params, const FeatureMatrix& features);

void save_standardizer(const StandardizationParams& params, const std::filesystem::path& path);
StandardizationParams load_standardizer(const std::filesystem::path& path);

/// On-disk feature cache:
///   "DBFC", u32 version, u32 D, u64 N, 32-byte backbone SHA-256,
///   N*D float32 row-major, N int64 record ids, N int32 labels (-1 when
///   unlabeled), N uint8 variant indices (0 = original image, k = k-th
///   augmented copy). All little-endian.
struct FeatureCache {
  std::string backbone_sha256;
  FeatureMatrix features;
  std::vector<std::uint8_t> variants;
};

void save_feature_cache(const FeatureCache& cache, const std::filesystem::path& path);
FeatureCache load_feature_cache(const std::filesystem::path& path);

}  // namespace debris
