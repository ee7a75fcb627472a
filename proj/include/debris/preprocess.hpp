#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "debris/dataset.hpp"

namespace debris {

inline constexpr int kInputSize = 299;
inline constexpr int kChannels = 3;

/// Interleaved RGB, values in [0, 1].
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // height * width * 3

  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

/// Single channel, row-major, values in [0, 1].
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

  float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const GrayImage&) const = default;
};

enum class ValueSpace : std::uint8_t { Raw8bit, UnitFloat, Standardized };

/// Channel-major C x H x W tensor.
struct ImageTensor {
  int channels = kChannels;
  int height = kInputSize;
  int width = kInputSize;
  ValueSpace value_space = ValueSpace::Standardized;
  std::vector<float> data;

  std::size_t size() const { return static_cast<std::size_t>(channels) * height * width; }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  /// True for a Standardized 3 x 299 x 299 tensor with matching storage.
  bool is_backbone_ready() const;
  bool operator==(const ImageTensor&) const = default;
};

/// ImageNet channel statistics.
struct NormalizationConstants {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};
};

struct AugmentationPolicy {
  double horizontal_flip_prob = 0.5;
  /// Scale factor drawn from [1 - scale_range, 1 + scale_range].
  double scale_range = 0.10;
  /// Rotation in degrees drawn from [-rotation_range, rotation_range].
  double rotation_range = 10.0;
  int copies_per_image = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// ITU-R BT.601 luma.
inline float luminance(float r, float g, float b) {
  return static_cast<float>(0.299 * r + 0.587 * g + 0.114 * b);
}

RgbImage decode_rgb(const std::filesystem::path& path);
GrayImage to_grayscale(const RgbImage& image);
RgbImage gray_to_rgb(const GrayImage& image);
GrayImage decode_and_grayscale(const std::filesystem::path& path);

/// Bilinear resampling with half-pixel centres and edge clamping.
GrayImage resize_bilinear(const GrayImage& image, int out_height, int out_width);

/// Resizes the shorter side to `target` (aspect preserved, longer side
/// rounded to nearest), then crops the centred target x target window.
GrayImage resize_center_crop(const GrayImage& image, int target = kInputSize);

ImageTensor replicate_and_normalize(const GrayImage& image,
                                    const NormalizationConstants& constants = {});
/// Inverse of the per-channel normalization; yields a UnitFloat tensor.
ImageTensor denormalize(const ImageTensor& tensor, const NormalizationConstants& constants = {});

struct AugmentationDraw {
  bool flip = false;
  double scale = 1.0;
  double rotation_degrees = 0.0;
};

/// Applies one geometric draw: rotation and scaling about the image centre
/// with bilinear sampling and reflection padding, then the optional flip.
/// Output has the input's size.
GrayImage apply_augmentation(const GrayImage& image, const AugmentationDraw& draw);

/// `policy.copies_per_image` variants. The stream is seeded from
/// (policy.seed, stream_id), normally the record id.
std::vector<GrayImage> augment(const GrayImage& image, const AugmentationPolicy& policy,
                               std::uint64_t stream_id);

/// Same as `augment` but refuses records outside the training split.
std::vector<GrayImage> augment(const ImageRecord& record, const GrayImage& image,
                               const AugmentationPolicy& policy);

/// decode -> grayscale -> resize/crop, the deterministic part of the chain.
GrayImage load_unit_image(const std::filesystem::path& path, int target = kInputSize);
ImageTensor preprocess_image(const std::filesystem::path& path,
                             const NormalizationConstants& constants = {});

// Preprocessed-tensor cache: "DBTC", u32 version, u32 count, u32 C, H, W,
// then count * C*H*W little-endian float32 values.
void save_tensor_cache(const std::filesystem::path& path, std::span<const ImageTensor> tensors);
std::vector<ImageTensor> load_tensor_cache(const std::filesystem::path& path);

}  // namespace debris
