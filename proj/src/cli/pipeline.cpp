#include "debris/pipeline.hpp"

#include <fmt/format.h>

#include "debris/error.hpp"
#include "debris/parallel.hpp"
#include "debris/sha256.hpp"

namespace debris {

FeatureCache extract_features(const DatasetManifest& manifest, const BackboneHandle& backbone,
                              const ExtractOptions& options) {
  options.augmentation.validate();
  const auto& records = manifest.records;
  for (const auto& r : records) {
    if (r.split == Split::Unassigned) {
      fail(ErrorKind::ConfigError, fmt::format("record {} has no split; run the split step first", r.record_id));
    }
  }
  const int dim = backbone.embedding_dim();
  std::vector<Matrix> rows(records.size());
  parallel_for(records.size(), options.jobs, [&](std::size_t i) {
    const auto& rec = records[i];
    const GrayImage base = load_unit_image(manifest.absolute_path(rec));
    std::vector<ImageTensor> tensors{replicate_and_normalize(base, options.constants)};
    if (rec.split == Split::Train) {
      for (const auto& g : augment(rec, base, options.augmentation)) {
        tensors.push_back(replicate_and_normalize(g, options.constants));
      }
    }
    try {
      rows[i] = embed_batch(backbone, tensors).X;
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("record {} ({}): {}", rec.record_id, rec.path.generic_string(), e.detail()));
    }
  });

  FeatureCache cache;
  cache.backbone_sha256 = backbone.sha256();
  auto& f = cache.features;
  Eigen::Index total = 0;
  for (const auto& m : rows) total += m.rows();
  f.X.resize(total, dim);
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (Eigen::Index v = 0; v < rows[i].rows(); ++v, ++at) {
      f.X.row(at) = rows[i].row(v).cast<float>().cast<double>();
      f.record_ids.push_back(records[i].record_id);
      f.labels.push_back(records[i].label);
      f.splits.push_back(records[i].split);
      cache.variants.push_back(static_cast<std::uint8_t>(v));
    }
  }
  return cache;
}

bool cache_layout_matches(const FeatureCache& cache, const DatasetManifest& manifest, int copies_per_image) {
  const auto& f = cache.features;
  std::size_t at = 0;
  for (const auto& rec : manifest.records) {
    const int variants = rec.split == Split::Train ? 1 + copies_per_image : 1;
    for (int v = 0; v < variants; ++v, ++at) {
      if (at >= f.rows() || f.record_ids[at] != rec.record_id || f.labels[at] != rec.label ||
          cache.variants[at] != v) {
        return false;
      }
    }
  }
  return at == f.rows();
}

std::string extraction_key(const DatasetManifest& manifest, const std::string& backbone_sha256,
                           const ExtractOptions& options) {
  const auto& a = options.augmentation;
  const auto& c = options.constants;
  std::string text = fmt::format("backbone {}\n", backbone_sha256);
  text += fmt::format("augmentation {} {} {} {} {}\n", a.horizontal_flip_prob, a.scale_range, a.rotation_range,
                      a.copies_per_image, a.seed);
  text += fmt::format("normalization {} {} {} {} {} {}\n", c.mean[0], c.mean[1], c.mean[2], c.std[0], c.std[1],
                      c.std[2]);
  text += serialize_manifest(manifest);
  return sha256_hex(text);
}

FeatureMatrix standardized_features(const FeatureCache& cache, const DatasetManifest& manifest,
                                    const StandardizationParams& params) {
  FeatureMatrix raw = cache.features;
  tag_splits(raw, manifest);
  return apply_standardizer(params, raw);
}

FeatureMatrix embed_images(std::span<const std::filesystem::path> images, const BackboneHandle& backbone,
                           const StandardizationParams& params, const NormalizationConstants& constants, int jobs) {
  std::vector<ImageTensor> tensors(images.size());
  parallel_for(images.size(), jobs, [&](std::size_t i) { tensors[i] = preprocess_image(images[i], constants); });
  FeatureMatrix raw = embed_batch(backbone, tensors, jobs);
  raw.X = raw.X.cast<float>().cast<double>();
  return apply_standardizer(params, raw);
}

}  // namespace debris
