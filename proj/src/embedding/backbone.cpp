#include "debris/backbone.hpp"

#include <fmt/format.h>

#include <cmath>
#include <mutex>
#include <numbers>
#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>
#include <sstream>

#include "debris/binio.hpp"
#include "debris/error.hpp"
#include "debris/parallel.hpp"
#include "debris/rng.hpp"
#include "debris/sha256.hpp"

namespace debris {
namespace fs = std::filesystem;

BackboneHandle::BackboneHandle(std::shared_ptr<const Backbone> impl, fs::path source,
                               std::string sha256)
    : impl_(std::move(impl)), source_(std::move(source)), sha256_(std::move(sha256)) {
  if (!impl_) fail(ErrorKind::BackboneLoadError, "null backbone");
  output_shape_ = impl_->output_shape();
}

FeatureMap BackboneHandle::forward(const ImageTensor& tensor) const {
  if (!impl_) fail(ErrorKind::BackboneLoadError, "backbone handle is empty");
  return impl_->forward(tensor);
}

// ---------------------------------------------------------------------------
// Toy backbone

ToyBackbone::ToyBackbone(std::uint64_t seed, int dim, int grid)
    : seed_(seed), dim_(dim), grid_(grid), projection_(dim, kCellFeatures) {
  if (dim < 1 || grid < 1 || grid > kInputSize) {
    fail(ErrorKind::BackboneShapeError, fmt::format("invalid toy backbone dim={} grid={}", dim, grid));
  }
  Rng rng(derive_seed(seed, 0));
  const double scale = 1.0 / std::sqrt(static_cast<double>(kCellFeatures));
  for (Eigen::Index i = 0; i < projection_.size(); ++i) {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - rng.uniform01();
    const double u2 = rng.uniform01();
    projection_.data()[i] =
        scale * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
}

FeatureMap ToyBackbone::forward(const ImageTensor& t) const {
  if (t.channels != kChannels || t.height < grid_ || t.width < grid_ || t.data.size() != t.size()) {
    fail(ErrorKind::InferenceError, "toy backbone received a malformed tensor");
  }
  FeatureMap out{dim_, grid_, grid_, {}};
  out.values.assign(static_cast<std::size_t>(dim_) * grid_ * grid_, 0.0f);
  Eigen::VectorXd cell(kCellFeatures);
  for (int gy = 0; gy < grid_; ++gy) {
    const int y0 = gy * t.height / grid_, y1 = (gy + 1) * t.height / grid_;
    const int ym = (y0 + y1) / 2;
    for (int gx = 0; gx < grid_; ++gx) {
      const int x0 = gx * t.width / grid_, x1 = (gx + 1) * t.width / grid_;
      const int xm = (x0 + x1) / 2;
      int k = 0;
      for (int c = 0; c < kChannels; ++c) {
        double sum = 0.0, sq = 0.0;
        double quad[4] = {0, 0, 0, 0};
        int quad_n[4] = {0, 0, 0, 0};
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) {
            const double v = t.at(c, y, x);
            const int q = (y >= ym ? 2 : 0) + (x >= xm ? 1 : 0);
            quad[q] += v;
            ++quad_n[q];
            sum += v;
            sq += v * v;
          }
        }
        const double n = static_cast<double>((y1 - y0) * (x1 - x0));
        for (int q = 0; q < 4; ++q) cell[k++] = quad_n[q] ? quad[q] / quad_n[q] : sum / n;
        cell[12 + c] = std::sqrt(std::max(0.0, sq / n - (sum / n) * (sum / n)));
      }
      cell[15] = 1.0;
      const Eigen::VectorXd act = (projection_ * cell).cwiseMax(0.0);
      const std::size_t pos = static_cast<std::size_t>(gy) * grid_ + gx;
      for (int ch = 0; ch < dim_; ++ch) {
        out.values[static_cast<std::size_t>(ch) * grid_ * grid_ + pos] = static_cast<float>(act[ch]);
      }
    }
  }
  return out;
}

namespace {
constexpr std::string_view kToyMagic = "debris-toy-backbone 1";
}

void write_toy_backbone(const fs::path& path, std::uint64_t seed, int grid) {
  write_file_atomic(path, fmt::format("{}\nseed {}\ngrid {}\nembedding_dim {}\n", kToyMagic, seed,
                                      grid, kEmbeddingDim));
}

namespace {

std::shared_ptr<const Backbone> parse_toy(std::string_view text, const fs::path& path) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::getline(in, line);
  std::uint64_t seed = 0;
  int grid = 0, dim = 0;
  bool have_seed = false;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    if (key.empty()) continue;
    bool ok = true;
    if (key == "seed") {
      ok = static_cast<bool>(fields >> seed);
      have_seed = ok;
    } else if (key == "grid") {
      ok = static_cast<bool>(fields >> grid);
    } else if (key == "embedding_dim") {
      ok = static_cast<bool>(fields >> dim);
    } else {
      ok = false;
    }
    if (!ok) fail(ErrorKind::BackboneLoadError, path.string() + ": bad line '" + line + "'");
  }
  if (!have_seed || grid < 1) fail(ErrorKind::BackboneLoadError, path.string() + ": incomplete toy backbone");
  if (dim != kEmbeddingDim) {
    fail(ErrorKind::BackboneShapeError,
         fmt::format("{}: embedding_dim {} (expected {})", path.string(), dim, kEmbeddingDim));
  }
  return std::make_shared<ToyBackbone>(seed, dim, grid);
}

// ---------------------------------------------------------------------------
// ONNX via OpenCV's dnn importer. Net::forward mutates internal buffers, so
// calls are serialized.

class OnnxBackbone final : public Backbone {
 public:
  OnnxBackbone(cv::dnn::Net net, std::array<int, 3> shape) : net_(std::move(net)), shape_(shape) {}

  FeatureMap forward(const ImageTensor& tensor) const override {
    std::lock_guard lock(mutex_);
    auto out = run(net_, tensor);
    return out;
  }
  std::array<int, 3> output_shape() const override { return shape_; }

  static FeatureMap run(cv::dnn::Net& net, const ImageTensor& tensor) {
    const int dims[4] = {1, tensor.channels, tensor.height, tensor.width};
    cv::Mat blob(4, dims, CV_32F, const_cast<float*>(tensor.data.data()));
    cv::Mat out;
    try {
      net.setInput(blob, "input");
      out = net.forward("features");
    } catch (const cv::Exception& e) {
      fail(ErrorKind::InferenceError, e.what());
    }
    FeatureMap map;
    if (!out.isContinuous() || out.depth() != CV_32F) out = out.clone();
    if (out.dims == 2 && out.size[0] == 1) {
      map.channels = out.size[1];
    } else if (out.dims == 4 && out.size[0] == 1) {
      map.channels = out.size[1];
      map.height = out.size[2];
      map.width = out.size[3];
    } else {
      fail(ErrorKind::BackboneShapeError, fmt::format("unsupported output rank {}", out.dims));
    }
    const auto* p = out.ptr<float>();
    map.values.assign(p, p + out.total());
    return map;
  }

 private:
  mutable std::mutex mutex_;
  mutable cv::dnn::Net net_;
  std::array<int, 3> shape_;
};

// Minimal protobuf wire-format walk: ModelProto.metadata_props is field 14,
// each entry a StringStringEntryProto {key = 1, value = 2}.
struct WireCursor {
  std::string_view data;
  std::size_t pos = 0;

  std::uint64_t varint() {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      if (pos >= data.size()) fail(ErrorKind::BackboneLoadError, "truncated protobuf varint");
      const auto b = static_cast<unsigned char>(data[pos++]);
      v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
      if (!(b & 0x80)) return v;
    }
    fail(ErrorKind::BackboneLoadError, "malformed protobuf varint");
  }

  std::string_view bytes(std::uint64_t n) {
    if (n > data.size() - pos) fail(ErrorKind::BackboneLoadError, "truncated protobuf field");
    auto out = data.substr(pos, n);
    pos += n;
    return out;
  }

  // Returns the length-delimited payload or skips other wire types.
  std::string_view field(int wire_type) {
    switch (wire_type) {
      case 0: varint(); return {};
      case 1: bytes(8); return {};
      case 2: return bytes(varint());
      case 5: bytes(4); return {};
      default: fail(ErrorKind::BackboneLoadError, fmt::format("unsupported wire type {}", wire_type));
    }
  }
};

}  // namespace

std::map<std::string, std::string> read_onnx_metadata(std::string_view model_bytes) {
  std::map<std::string, std::string> out;
  WireCursor top{model_bytes};
  while (top.pos < model_bytes.size()) {
    const auto tag = top.varint();
    const auto payload = top.field(static_cast<int>(tag & 7));
    if ((tag >> 3) != 14 || (tag & 7) != 2) continue;
    WireCursor entry{payload};
    std::string key, value;
    while (entry.pos < payload.size()) {
      const auto t = entry.varint();
      const auto p = entry.field(static_cast<int>(t & 7));
      if ((t & 7) != 2) continue;
      if ((t >> 3) == 1) key = p;
      if ((t >> 3) == 2) value = p;
    }
    out[key] = value;
  }
  return out;
}

BackboneHandle load_backbone(const fs::path& path) {
  if (!fs::is_regular_file(path)) {
    fail(ErrorKind::BackboneLoadError, "backbone file '" + path.string() + "' does not exist");
  }
  const std::string bytes = read_file(path);
  const auto digest = sha256_hex(bytes);
  if (bytes.starts_with(kToyMagic)) {
    return BackboneHandle(parse_toy(bytes, path), path, digest);
  }

  const auto metadata = read_onnx_metadata(bytes);
  auto it = metadata.find("embedding_dim");
  if (it == metadata.end()) {
    fail(ErrorKind::BackboneLoadError, path.string() + ": missing metadata key 'embedding_dim'");
  }
  if (it->second != std::to_string(kEmbeddingDim)) {
    fail(ErrorKind::BackboneShapeError,
         fmt::format("{}: embedding_dim '{}' (expected {})", path.string(), it->second, kEmbeddingDim));
  }
  cv::dnn::Net net;
  try {
    net = cv::dnn::readNetFromONNX(bytes.data(), bytes.size());
  } catch (const cv::Exception& e) {
    fail(ErrorKind::BackboneLoadError, path.string() + ": " + e.what());
  }
  if (net.empty()) fail(ErrorKind::BackboneLoadError, path.string() + ": empty network");

  // Probe with a zero tensor to verify the declared contract.
  ImageTensor probe;
  probe.data.assign(probe.size(), 0.0f);
  FeatureMap map;
  try {
    map = OnnxBackbone::run(net, probe);
  } catch (const Error& e) {
    fail(ErrorKind::BackboneShapeError, path.string() + ": probe inference failed: " + e.detail());
  }
  if (map.channels != kEmbeddingDim) {
    fail(ErrorKind::BackboneShapeError,
         fmt::format("{}: graph emits {} channels, expected {} (classifier head attached?)",
                     path.string(), map.channels, kEmbeddingDim));
  }
  auto impl = std::make_shared<OnnxBackbone>(std::move(net),
                                             std::array<int, 3>{map.channels, map.height, map.width});
  return BackboneHandle(std::move(impl), path, digest);
}

FeatureMatrix embed_batch(const BackboneHandle& handle, std::span<const ImageTensor> tensors, int jobs) {
  const int d = handle.embedding_dim();
  FeatureMatrix out;
  out.X.resize(static_cast<Eigen::Index>(tensors.size()), d);
  out.record_ids.resize(tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!tensors[i].is_backbone_ready()) {
      fail(ErrorKind::DimensionError,
           fmt::format("tensor {} is not a Standardized 3x{}x{} tensor", i, kInputSize, kInputSize));
    }
    out.record_ids[i] = static_cast<std::int64_t>(i);
  }
  parallel_for(tensors.size(), jobs, [&](std::size_t i) {
    FeatureMap map;
    try {
      map = handle.forward(tensors[i]);
    } catch (const Error& e) {
      fail(ErrorKind::InferenceError, fmt::format("batch index {}: {}", i, e.detail()));
    }
    if (map.channels != d) {
      fail(ErrorKind::InferenceError,
           fmt::format("batch index {}: backbone produced {} channels, expected {}", i, map.channels, d));
    }
    const Vector row = global_average_pool(map.values, map.channels, map.height, map.width);
    if (!row.allFinite()) {
      fail(ErrorKind::NonFiniteEmbedding, fmt::format("batch index {}: non-finite embedding", i));
    }
    out.X.row(static_cast<Eigen::Index>(i)) = row.transpose();
  });
  return out;
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::string_view kParityMagic = "DBPF";
constexpr std::uint32_t kParityVersion = 1;
}  // namespace

void save_parity_fixture(const ParityFixture& fixture, const fs::path& path) {
  if (fixture.inputs.size() != fixture.references.size()) {
    fail(ErrorKind::DimensionError, "parity fixture inputs and references differ in count");
  }
  const auto dim = fixture.references.empty() ? kEmbeddingDim
                                              : static_cast<int>(fixture.references.front().size());
  ByteWriter w;
  w.raw(kParityMagic);
  w.u32(kParityVersion);
  w.u32(static_cast<std::uint32_t>(fixture.inputs.size()));
  w.u32(kChannels);
  w.u32(kInputSize);
  w.u32(kInputSize);
  w.u32(static_cast<std::uint32_t>(dim));
  for (const auto& t : fixture.inputs) {
    if (!t.is_backbone_ready()) fail(ErrorKind::DimensionError, "parity input is not 3x299x299");
    for (float v : t.data) w.f32(v);
  }
  for (const auto& ref : fixture.references) {
    if (static_cast<int>(ref.size()) != dim) fail(ErrorKind::DimensionError, "ragged references");
    for (float v : ref) w.f32(v);
  }
  write_file_atomic(path, w.bytes());
}

ParityFixture load_parity_fixture(const fs::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes, ErrorKind::InferenceError);
  if (r.raw(4) != kParityMagic) fail(ErrorKind::InferenceError, "not a parity fixture");
  if (r.u32() != kParityVersion) fail(ErrorKind::InferenceError, "unsupported parity fixture version");
  const auto count = r.u32();
  if (r.u32() != kChannels || r.u32() != kInputSize || r.u32() != kInputSize) {
    fail(ErrorKind::InferenceError, "parity fixture input shape is not 3x299x299");
  }
  const auto dim = r.u32();
  ParityFixture f;
  f.inputs.resize(count);
  for (auto& t : f.inputs) {
    t.data.resize(t.size());
    for (auto& v : t.data) v = r.f32();
  }
  f.references.assign(count, std::vector<float>(dim));
  for (auto& ref : f.references) {
    for (auto& v : ref) v = r.f32();
  }
  r.expect_end();
  return f;
}

double parity_max_relative_error(const BackboneHandle& handle, const ParityFixture& fixture,
                                 double floor) {
  const auto got = embed_batch(handle, fixture.inputs);
  double worst = 0.0;
  for (std::size_t i = 0; i < fixture.references.size(); ++i) {
    const auto& ref = fixture.references[i];
    if (static_cast<Eigen::Index>(ref.size()) != got.X.cols()) {
      fail(ErrorKind::DimensionError, "reference dimension differs from backbone output");
    }
    for (std::size_t d = 0; d < ref.size(); ++d) {
      const double a = got.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d));
      const double r = ref[d];
      worst = std::max(worst, std::abs(a - r) / std::max(std::abs(r), floor));
    }
  }
  return worst;
}

}  // namespace debris
