#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "debris/features.hpp"
#include "debris/preprocess.hpp"

namespace debris {

/// Spatial feature map, channel-major. A pre-pooled output is 1 x 1.
struct FeatureMap {
  int channels = 0;
  int height = 1;
  int width = 1;
  std::vector<float> values;
};

/// Inference backend. Implementations must be deterministic and safe to call
/// from several threads.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual FeatureMap forward(const ImageTensor& tensor) const = 0;
  /// Declared output shape (C, h, w); h = w = 1 for pre-pooled graphs.
  virtual std::array<int, 3> output_shape() const = 0;
};

/// Immutable, shareable handle to a loaded backbone.
class BackboneHandle {
 public:
  BackboneHandle() = default;
  BackboneHandle(std::shared_ptr<const Backbone> impl, std::filesystem::path source,
                 std::string sha256);

  const std::filesystem::path& source() const { return source_; }
  const std::string& sha256() const { return sha256_; }
  int embedding_dim() const { return output_shape_[0]; }
  std::array<int, 3> input_shape() const { return {kChannels, kInputSize, kInputSize}; }
  std::array<int, 3> output_shape() const { return output_shape_; }
  FeatureMap forward(const ImageTensor& tensor) const;

 private:
  std::shared_ptr<const Backbone> impl_;
  std::filesystem::path source_;
  std::string sha256_;
  std::array<int, 3> output_shape_{0, 0, 0};
};

/// Fixed random-projection feature extractor used in place of the real
/// network. The image is cut into grid x grid cells; each cell's local
/// statistics are projected to `dim` channels with a seeded Gaussian matrix
/// and rectified, giving a dim x grid x grid feature map.
class ToyBackbone final : public Backbone {
 public:
  ToyBackbone(std::uint64_t seed, int dim = kEmbeddingDim, int grid = 7);

  FeatureMap forward(const ImageTensor& tensor) const override;
  std::array<int, 3> output_shape() const override { return {dim_, grid_, grid_}; }

  static constexpr int kCellFeatures = 16;

 private:
  std::uint64_t seed_;
  int dim_;
  int grid_;
  Matrix projection_;  // dim x kCellFeatures
};

/// Writes the text descriptor loaded by `load_backbone` for a ToyBackbone.
void write_toy_backbone(const std::filesystem::path& path, std::uint64_t seed, int grid = 7);

/// key -> value pairs from an ONNX model's metadata_props.
std::map<std::string, std::string> read_onnx_metadata(std::string_view model_bytes);

/// Loads either a toy-backbone descriptor or an ONNX graph (input "input",
/// output "features", metadata embedding_dim = 2048). Missing or unparsable
/// files raise BackboneLoadError; a graph whose probe output is not
/// 2048-dimensional raises BackboneShapeError.
BackboneHandle load_backbone(const std::filesystem::path& path);

/// Runs the backbone on each tensor and pools to one row per tensor.
FeatureMatrix embed_batch(const BackboneHandle& handle, std::span<const ImageTensor> tensors,
                          int jobs = 1);

/// Parity fixture shared with the export tool:
///   "DBPF", u32 version, u32 count, u32 C, H, W, u32 D,
///   count*C*H*W float32 input tensors, count*D float32 reference embeddings.
struct ParityFixture {
  std::vector<ImageTensor> inputs;
  std::vector<std::vector<float>> references;
};

void save_parity_fixture(const ParityFixture& fixture, const std::filesystem::path& path);
ParityFixture load_parity_fixture(const std::filesystem::path& path);

/// Largest elementwise relative deviation |a - r| / max(|r|, floor) between
/// embed_batch(inputs) and the stored references. Below `floor` the
/// comparison is effectively absolute, since float32 results near zero
/// carry cancellation error from much larger terms.
double parity_max_relative_error(const BackboneHandle& handle, const ParityFixture& fixture,
                                 double floor = 1e-3);

}  // namespace debris
