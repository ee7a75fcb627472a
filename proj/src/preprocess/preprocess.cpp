#include "debris/preprocess.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>
#include <opencv2/imgcodecs.hpp>

#include "debris/binio.hpp"
#include "debris/error.hpp"
#include "debris/rng.hpp"

namespace debris {
namespace fs = std::filesystem;

bool ImageTensor::is_backbone_ready() const {
  return value_space == ValueSpace::Standardized && channels == kChannels &&
         height == kInputSize && width == kInputSize && data.size() == size();
}

void AugmentationPolicy::validate() const {
  if (!(horizontal_flip_prob >= 0.0 && horizontal_flip_prob <= 1.0)) {
    fail(ErrorKind::ConfigError, "horizontal_flip_prob must lie in [0, 1]");
  }
  if (!(scale_range >= 0.0 && scale_range < 1.0)) {
    fail(ErrorKind::ConfigError, "scale_range must lie in [0, 1)");
  }
  if (!(rotation_range >= 0.0 && rotation_range <= 180.0)) {
    fail(ErrorKind::ConfigError, "rotation_range must lie in [0, 180]");
  }
  if (copies_per_image < 0) fail(ErrorKind::ConfigError, "copies_per_image must be >= 0");
}

RgbImage decode_rgb(const fs::path& path) {
  cv::Mat bgr;
  try {
    bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    fail(ErrorKind::ImageDecodeError, path.string() + ": " + e.what());
  }
  if (bgr.empty() || bgr.type() != CV_8UC3) {
    fail(ErrorKind::ImageDecodeError, "cannot decode image '" + path.string() + "'");
  }
  RgbImage out;
  out.height = bgr.rows;
  out.width = bgr.cols;
  out.pixels.resize(static_cast<std::size_t>(bgr.rows) * bgr.cols * 3);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      auto* px = &out.pixels[(static_cast<std::size_t>(y) * bgr.cols + x) * 3];
      px[0] = static_cast<float>(row[x][2]) / 255.0f;
      px[1] = static_cast<float>(row[x][1]) / 255.0f;
      px[2] = static_cast<float>(row[x][0]) / 255.0f;
    }
  }
  return out;
}

GrayImage to_grayscale(const RgbImage& image) {
  GrayImage out(image.height, image.width);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const auto* px = &image.pixels[i * 3];
    out.pixels[i] = std::clamp(luminance(px[0], px[1], px[2]), 0.0f, 1.0f);
  }
  return out;
}

RgbImage gray_to_rgb(const GrayImage& image) {
  RgbImage out{image.height, image.width, {}};
  out.pixels.reserve(image.pixels.size() * 3);
  for (float v : image.pixels) out.pixels.insert(out.pixels.end(), {v, v, v});
  return out;
}

GrayImage decode_and_grayscale(const fs::path& path) { return to_grayscale(decode_rgb(path)); }

namespace {

float sample_bilinear(const GrayImage& img, double u, double v) {
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const auto fx = static_cast<float>(u - x0);
  const auto fy = static_cast<float>(v - y0);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const float top = img.at(y0, x0) * (1.0f - fx) + img.at(y0, x1) * fx;
  const float bottom = img.at(y1, x0) * (1.0f - fx) + img.at(y1, x1) * fx;
  return top * (1.0f - fy) + bottom * fy;
}

double clamp_coord(double u, int extent) {
  return std::clamp(u, 0.0, static_cast<double>(extent - 1));
}

// Mirror a continuous coordinate into [0, extent - 1] (edge pixel not repeated).
double reflect_coord(double u, int extent) {
  if (extent == 1) return 0.0;
  const double period = 2.0 * (extent - 1);
  double t = std::fmod(u, period);
  if (t < 0) t += period;
  return t > extent - 1 ? period - t : t;
}

}  // namespace

GrayImage resize_bilinear(const GrayImage& image, int out_height, int out_width) {
  if (image.height < 1 || image.width < 1 || out_height < 1 || out_width < 1) {
    fail(ErrorKind::DimensionError, "resize requires non-empty images");
  }
  if (out_height == image.height && out_width == image.width) return image;
  GrayImage out(out_height, out_width);
  const double sy = static_cast<double>(image.height) / out_height;
  const double sx = static_cast<double>(image.width) / out_width;
  for (int y = 0; y < out_height; ++y) {
    const double v = clamp_coord((y + 0.5) * sy - 0.5, image.height);
    for (int x = 0; x < out_width; ++x) {
      const double u = clamp_coord((x + 0.5) * sx - 0.5, image.width);
      out.at(y, x) = sample_bilinear(image, u, v);
    }
  }
  return out;
}

GrayImage resize_center_crop(const GrayImage& image, int target) {
  if (image.height < 1 || image.width < 1) {
    fail(ErrorKind::DimensionError, "cannot resize an empty image");
  }
  const int shorter = std::min(image.height, image.width);
  auto scaled = [&](int side) {
    return side == shorter ? target
                           : static_cast<int>(std::lround(static_cast<double>(side) * target / shorter));
  };
  const int h = image.height == shorter ? target : std::max(target, scaled(image.height));
  const int w = image.width == shorter ? target : std::max(target, scaled(image.width));
  const GrayImage resized = resize_bilinear(image, h, w);
  if (h == target && w == target) return resized;
  const int top = (h - target) / 2;
  const int left = (w - target) / 2;
  GrayImage out(target, target);
  for (int y = 0; y < target; ++y) {
    for (int x = 0; x < target; ++x) out.at(y, x) = resized.at(top + y, left + x);
  }
  return out;
}

ImageTensor replicate_and_normalize(const GrayImage& image, const NormalizationConstants& k) {
  ImageTensor t;
  t.channels = kChannels;
  t.height = image.height;
  t.width = image.width;
  t.value_space = ValueSpace::Standardized;
  t.data.resize(t.size());
  const auto plane = image.pixels.size();
  for (int c = 0; c < kChannels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      t.data[c * plane + i] = (image.pixels[i] - k.mean[c]) / k.std[c];
    }
  }
  return t;
}

ImageTensor denormalize(const ImageTensor& tensor, const NormalizationConstants& k) {
  if (tensor.value_space != ValueSpace::Standardized) {
    fail(ErrorKind::DimensionError, "denormalize expects a Standardized tensor");
  }
  ImageTensor out = tensor;
  out.value_space = ValueSpace::UnitFloat;
  const auto plane = static_cast<std::size_t>(tensor.height) * tensor.width;
  for (int c = 0; c < tensor.channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      out.data[c * plane + i] = tensor.data[c * plane + i] * k.std[c] + k.mean[c];
    }
  }
  return out;
}

GrayImage apply_augmentation(const GrayImage& image, const AugmentationDraw& draw) {
  GrayImage out(image.height, image.width);
  const double cx = (image.width - 1) / 2.0;
  const double cy = (image.height - 1) / 2.0;
  const double theta = draw.rotation_degrees * std::numbers::pi / 180.0;
  // Inverse map: output -> source is a rotation by -theta and a 1/scale zoom.
  const double c = std::cos(theta) / draw.scale;
  const double s = std::sin(theta) / draw.scale;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const int xs = draw.flip ? image.width - 1 - x : x;
      const double dx = xs - cx;
      const double dy = y - cy;
      const double u = cx + c * dx + s * dy;
      const double v = cy - s * dx + c * dy;
      out.at(y, x) = sample_bilinear(image, reflect_coord(u, image.width),
                                     reflect_coord(v, image.height));
    }
  }
  return out;
}

std::vector<GrayImage> augment(const GrayImage& image, const AugmentationPolicy& policy,
                               std::uint64_t stream_id) {
  policy.validate();
  Rng rng(derive_seed(policy.seed, stream_id));
  std::vector<GrayImage> out;
  out.reserve(static_cast<std::size_t>(policy.copies_per_image));
  for (int k = 0; k < policy.copies_per_image; ++k) {
    AugmentationDraw draw;
    draw.flip = rng.bernoulli(policy.horizontal_flip_prob);
    draw.scale = rng.uniform(1.0 - policy.scale_range, 1.0 + policy.scale_range);
    draw.rotation_degrees = rng.uniform(-policy.rotation_range, policy.rotation_range);
    out.push_back(apply_augmentation(image, draw));
  }
  return out;
}

std::vector<GrayImage> augment(const ImageRecord& record, const GrayImage& image,
                               const AugmentationPolicy& policy) {
  if (record.split != Split::Train) {
    fail(ErrorKind::AugmentationOnEvalSplit,
         fmt::format("record {} is in the {} split; augmentation is train-only", record.record_id,
                     to_string(record.split)));
  }
  return augment(image, policy, static_cast<std::uint64_t>(record.record_id));
}

GrayImage load_unit_image(const fs::path& path, int target) {
  return resize_center_crop(decode_and_grayscale(path), target);
}

ImageTensor preprocess_image(const fs::path& path, const NormalizationConstants& constants) {
  return replicate_and_normalize(load_unit_image(path), constants);
}

namespace {
constexpr std::string_view kTensorMagic = "DBTC";
constexpr std::uint32_t kTensorVersion = 1;
}  // namespace

void save_tensor_cache(const fs::path& path, std::span<const ImageTensor> tensors) {
  ByteWriter w;
  w.raw(kTensorMagic);
  w.u32(kTensorVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  w.u32(kChannels);
  w.u32(kInputSize);
  w.u32(kInputSize);
  for (const auto& t : tensors) {
    if (!t.is_backbone_ready()) fail(ErrorKind::TensorCacheError, "tensor is not 3x299x299 Standardized");
    for (float v : t.data) w.f32(v);
  }
  write_file_atomic(path, w.bytes());
}

std::vector<ImageTensor> load_tensor_cache(const fs::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::TensorCacheError, e.detail());
  }
  ByteReader r(bytes, ErrorKind::TensorCacheError);
  if (r.raw(4) != kTensorMagic) fail(ErrorKind::TensorCacheError, "bad magic");
  if (r.u32() != kTensorVersion) fail(ErrorKind::TensorCacheError, "unsupported version");
  const auto count = r.u32();
  const auto c = r.u32(), h = r.u32(), w = r.u32();
  if (c != kChannels || h != kInputSize || w != kInputSize) {
    fail(ErrorKind::TensorCacheError, fmt::format("unexpected shape {}x{}x{}", c, h, w));
  }
  std::vector<ImageTensor> out(count);
  for (auto& t : out) {
    t.data.resize(t.size());
    for (auto& v : t.data) v = r.f32();
  }
  r.expect_end();
  return out;
}

}  // namespace debris
