#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "debris/backbone.hpp"
#include "debris/dataset.hpp"
#include "debris/features.hpp"
#include "debris/preprocess.hpp"

namespace debris {

struct ExtractOptions {
  AugmentationPolicy augmentation;
  NormalizationConstants constants;
  int jobs = 1;
};

/// Embeds every record of a split manifest. Rows follow manifest order; each
/// record contributes its original image (variant 0) and, for Train records
/// only, `copies_per_image` augmented variants numbered from 1. Values are
/// rounded to float32, matching what the cache stores.
FeatureCache extract_features(const DatasetManifest& manifest, const BackboneHandle& backbone,
                              const ExtractOptions& options);

/// Expected (record_id, label, variant) layout of `extract_features` output.
bool cache_layout_matches(const FeatureCache& cache, const DatasetManifest& manifest, int copies_per_image);

/// Hex digest identifying everything extraction depends on: backbone hash,
/// manifest bytes, augmentation policy and normalization constants.
std::string extraction_key(const DatasetManifest& manifest, const std::string& backbone_sha256,
                           const ExtractOptions& options);

/// Raw cache rows tagged with splits, then standardized with `params`.
FeatureMatrix standardized_features(const FeatureCache& cache, const DatasetManifest& manifest,
                                    const StandardizationParams& params);

/// Full prediction chain for new images: preprocess, embed, standardize.
FeatureMatrix embed_images(std::span<const std::filesystem::path> images, const BackboneHandle& backbone,
                           const StandardizationParams& params, const NormalizationConstants& constants = {},
                           int jobs = 1);

}  // namespace debris
