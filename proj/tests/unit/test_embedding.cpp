#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "debris/backbone.hpp"
#include "debris/binio.hpp"
#include "debris/sha256.hpp"
#include "debris/features.hpp"
#include "onnx_writer.hpp"
#include "support.hpp"

using namespace debris;
namespace fs = std::filesystem;
using debris::testing::TempDir;
using debris::testing::thrown_kind;

namespace {

FeatureMatrix matrix_of(std::initializer_list<std::initializer_list<double>> rows) {
  FeatureMatrix f;
  f.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) f.X(r, c++) = v;
    f.record_ids.push_back(r);
    f.labels.push_back(0);
    ++r;
  }
  return f;
}

ImageTensor tensor_with(float base, int pattern) {
  ImageTensor t;
  t.data.resize(t.size());
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    t.data[i] = base + 0.001f * static_cast<float>((i * (pattern + 3)) % 97);
  }
  return t;
}

}  // namespace

TEST_CASE("global average pooling") {
  const std::vector<float> map = {3, 3, 3, 3, 1, 2, 3, 4};
  const auto v = global_average_pool(map, 2, 2, 2);
  CHECK(v[0] == 3.0);
  CHECK(v[1] == 2.5);

  const std::vector<float> single = {1.5f, -2.0f, 7.0f};
  const auto id = global_average_pool(single, 3, 1, 1);
  CHECK(id[0] == 1.5);
  CHECK(id[1] == -2.0);
  CHECK(id[2] == 7.0);

  Rng rng(4);
  std::vector<float> f(5 * 3 * 4), scaled(f.size()), shuffled(f.size());
  for (auto& x : f) x = static_cast<float>(rng.uniform(-1, 1));
  for (std::size_t i = 0; i < f.size(); ++i) scaled[i] = 7.0f * f[i];
  const auto a = global_average_pool(f, 5, 3, 4);
  const auto b = global_average_pool(scaled, 5, 3, 4);
  for (int c = 0; c < 5; ++c) CHECK(b[c] == doctest::Approx(7.0 * a[c]).epsilon(1e-6));
  // Reversing spatial positions within each channel leaves the mean unchanged.
  for (int c = 0; c < 5; ++c)
    for (int i = 0; i < 12; ++i) shuffled[c * 12 + i] = f[c * 12 + (11 - i)];
  const auto p = global_average_pool(shuffled, 5, 3, 4);
  for (int c = 0; c < 5; ++c) CHECK(p[c] == doctest::Approx(a[c]).epsilon(1e-12));

  CHECK(thrown_kind([&] { global_average_pool(map, 3, 2, 2); }) == "DimensionError");
}

TEST_CASE("standardizer arithmetic") {
  const auto f = matrix_of({{1, 5}, {2, 5}, {3, 5}});
  const auto p = fit_standardizer(f);
  CHECK(p.mu[0] == doctest::Approx(2.0));
  CHECK(p.sigma[0] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
  CHECK(p.sigma[0] == doctest::Approx(0.8165).epsilon(1e-4));
  CHECK(p.sigma[1] == 0.0);
  REQUIRE(p.constant_dims.size() == 1);
  CHECK(p.constant_dims[0] == 1);

  const auto z = apply_standardizer(p, f);
  CHECK(z.X(0, 0) == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(z.X(1, 0) == doctest::Approx(0.0));
  CHECK(z.X(2, 0) == doctest::Approx(1.2247).epsilon(1e-4));
  for (int r = 0; r < 3; ++r) CHECK(z.X(r, 1) == 0.0);
  CHECK(z.standardizer_hash == p.hash());

  const auto other = matrix_of({{10, 123}});
  CHECK(apply_standardizer(p, other).X(0, 1) == 0.0);
  CHECK(thrown_kind([&] { apply_standardizer(p, matrix_of({{1, 2, 3}})); }) == "DimensionError");
}

TEST_CASE("standardized training columns have zero mean and unit population std") {
  Rng rng(8);
  FeatureMatrix f;
  f.X.resize(200, 30);
  for (Eigen::Index r = 0; r < 200; ++r) {
    for (Eigen::Index c = 0; c < 30; ++c) f.X(r, c) = 50.0 * c + (c + 1) * rng.uniform(-3, 3);
    f.record_ids.push_back(r);
  }
  f.X.col(4).setConstant(2.5);
  const auto p = fit_standardizer(f);
  const auto z = apply_standardizer(p, f);
  for (Eigen::Index c = 0; c < 30; ++c) {
    const double mean = z.X.col(c).mean();
    const double sd = std::sqrt((z.X.col(c).array() - mean).square().mean());
    CHECK(std::abs(mean) < 1e-6);
    if (c == 4) {
      CHECK(z.X.col(c).isZero(0.0));
    } else {
      CHECK(std::abs(sd - 1.0) < 1e-6);
    }
  }
  // Fixed point: standardizing again changes nothing.
  const auto p2 = fit_standardizer(z);
  for (Eigen::Index c = 0; c < 30; ++c) {
    if (c == 4) continue;
    CHECK(std::abs(p2.mu[c]) < 1e-9);
    CHECK(std::abs(p2.sigma[c] - 1.0) < 1e-9);
  }
  // Inverse recovers the data on non-constant dims.
  const auto back = invert_standardizer(p, z);
  CHECK((back.X - f.X).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("standardizer guards") {
  auto f = matrix_of({{1}, {2}, {3}});
  f.splits = {Split::Train, Split::Validation, Split::Train};
  CHECK(thrown_kind([&] { fit_standardizer(f); }) == "SplitLeakage");
  f.splits = {Split::Train, Split::Train, Split::Test};
  CHECK(thrown_kind([&] { fit_standardizer(f); }) == "SplitLeakage");
  CHECK(thrown_kind([&] { fit_standardizer(matrix_of({{1}})); }) == "InsufficientData");
}

TEST_CASE("standardizer persistence keeps the hash") {
  TempDir dir;
  const auto p = fit_standardizer(matrix_of({{1, 5}, {2, 5}, {4, 5}}));
  save_standardizer(p, dir / "s.dbsp");
  const auto back = load_standardizer(dir / "s.dbsp");
  CHECK(back.hash() == p.hash());
  CHECK(back.constant_dims == p.constant_dims);
  CHECK(sha256_file(dir / "s.dbsp") == p.hash());
}

TEST_CASE("feature cache round trip and corruption") {
  TempDir dir;
  FeatureCache cache;
  cache.backbone_sha256 = std::string(64, 'a');
  cache.features = matrix_of({{0.5, -1.25}, {3, 4}});
  cache.features.labels = {2, -1};
  cache.variants = {0, 1};
  save_feature_cache(cache, dir / "c.dbfc");
  const auto back = load_feature_cache(dir / "c.dbfc");
  CHECK(back.backbone_sha256 == cache.backbone_sha256);
  CHECK(back.features.X == cache.features.X);
  CHECK(back.features.record_ids == cache.features.record_ids);
  CHECK(back.variants == cache.variants);

  auto bytes = read_file(dir / "c.dbfc");
  write_file_atomic(dir / "short.dbfc", bytes.substr(0, bytes.size() - 3));
  CHECK(thrown_kind([&] { load_feature_cache(dir / "short.dbfc"); }) == "FeatureCacheError");
  bytes[0] = 'X';
  write_file_atomic(dir / "magic.dbfc", bytes);
  CHECK(thrown_kind([&] { load_feature_cache(dir / "magic.dbfc"); }) == "FeatureCacheError");
}

TEST_CASE("toy backbone contract") {
  TempDir dir;
  write_toy_backbone(dir / "toy.backbone", 3);
  const auto h = load_backbone(dir / "toy.backbone");
  CHECK(h.embedding_dim() == 2048);
  CHECK(h.input_shape() == std::array<int, 3>{3, 299, 299});
  CHECK(h.sha256() == sha256_file(dir / "toy.backbone"));

  SUBCASE("empty batch") {
    const auto e = embed_batch(h, {});
    CHECK(e.X.rows() == 0);
    CHECK(e.X.cols() == 2048);
  }
  SUBCASE("identical tensors give identical rows; order and threads do not matter") {
    const auto a = tensor_with(-0.5f, 1), b = tensor_with(0.7f, 2);
    const std::vector<ImageTensor> ab{a, b, a};
    const std::vector<ImageTensor> ba{b, a};
    const auto e1 = embed_batch(h, ab, 1);
    const auto e2 = embed_batch(h, ba, 2);
    CHECK(e1.X.row(0) == e1.X.row(2));
    CHECK(e1.X.row(0) == e2.X.row(1));
    CHECK(e1.X.row(1) == e2.X.row(0));
    CHECK(e1.X.row(0) != e1.X.row(1));
    CHECK(e1.X.allFinite());
  }
  SUBCASE("malformed input") {
    ImageTensor t;
    t.height = 10;
    t.data.resize(t.size());
    const std::vector<ImageTensor> bad{t};
    CHECK(thrown_kind([&] { embed_batch(h, bad); }) == "DimensionError");
  }
  SUBCASE("non-finite tensors are reported") {
    auto t = tensor_with(0.0f, 1);
    t.data[5] = std::numeric_limits<float>::quiet_NaN();
    const std::vector<ImageTensor> bad{tensor_with(0.1f, 1), t};
    const auto kind = thrown_kind([&] { embed_batch(h, bad); });
    CHECK((kind == "NonFiniteEmbedding" || kind == "InferenceError"));
  }
}

TEST_CASE("load_backbone errors") {
  TempDir dir;
  CHECK(thrown_kind([&] { load_backbone(dir / "missing.onnx"); }) == "BackboneLoadError");
  std::ofstream(dir / "junk.onnx") << "not a model";
  CHECK(thrown_kind([&] { load_backbone(dir / "junk.onnx"); }) == "BackboneLoadError");

  debris::testing::TinyOnnxOptions no_meta;
  no_meta.metadata.clear();
  debris::testing::write_tiny_onnx(dir / "nometa.onnx", no_meta);
  CHECK(thrown_kind([&] { load_backbone(dir / "nometa.onnx"); }) == "BackboneLoadError");

  debris::testing::TinyOnnxOptions head;
  head.out_channels = 1000;
  debris::testing::write_tiny_onnx(dir / "head.onnx", head);
  CHECK(thrown_kind([&] { load_backbone(dir / "head.onnx"); }) == "BackboneShapeError");

  head.metadata = {{"embedding_dim", "1000"}};
  debris::testing::write_tiny_onnx(dir / "head2.onnx", head);
  CHECK(thrown_kind([&] { load_backbone(dir / "head2.onnx"); }) == "BackboneShapeError");
}

TEST_CASE("ONNX graph contract and parity fixture") {
  TempDir dir;
  debris::testing::TinyOnnxOptions opts;
  opts.seed = 9;
  debris::testing::write_tiny_onnx(dir / "tiny.onnx", opts);
  CHECK(read_onnx_metadata(read_file(dir / "tiny.onnx")).at("embedding_dim") == "2048");
  const auto h = load_backbone(dir / "tiny.onnx");
  CHECK(h.embedding_dim() == 2048);

  // Reference embeddings computed directly from the graph's definition:
  // features = W * channel_means + B.
  std::vector<float> W(2048 * 3), B(2048);
  {
    std::uint32_t state = opts.seed * 2654435761u + 1;
    auto next = [&] {
      state = state * 1664525u + 1013904223u;
      return static_cast<float>((state >> 8) & 0xffff) / 65536.0f - 0.5f;
    };
    for (auto& w : W) w = next();
    for (auto& b : B) b = next();
  }
  // Inputs on a 1/64 grid keep every float32 partial sum exact, so the
  // runtime's pooling and the double-precision oracle agree closely.
  auto grid_tensor = [](int i) {
    ImageTensor t;
    t.data.resize(t.size());
    for (std::size_t k = 0; k < t.data.size(); ++k) {
      t.data[k] = static_cast<float>(static_cast<int>((k * (i + 7)) % 129) - 64 + 16 * i) / 64.0f;
    }
    return t;
  };
  ParityFixture fixture;
  for (int i = 0; i < 5; ++i) {
    auto t = grid_tensor(i);
    if (i == 0) std::fill(t.data.begin(), t.data.end(), 0.0f);
    if (i == 4) t = fixture.inputs[1];  // duplicate input
    std::vector<float> ref(2048);
    double means[3];
    const std::size_t plane = 299 * 299;
    for (int c = 0; c < 3; ++c) {
      double s = 0;
      for (std::size_t p = 0; p < plane; ++p) s += t.data[c * plane + p];
      means[c] = s / plane;
    }
    for (int o = 0; o < 2048; ++o)
      ref[o] = static_cast<float>(W[o * 3] * means[0] + W[o * 3 + 1] * means[1] + W[o * 3 + 2] * means[2] + B[o]);
    fixture.inputs.push_back(std::move(t));
    fixture.references.push_back(std::move(ref));
  }
  CHECK(fixture.references[4] == fixture.references[1]);
  for (float v : fixture.references[0]) CHECK(std::isfinite(v));

  save_parity_fixture(fixture, dir / "parity.dbpf");
  const auto loaded = load_parity_fixture(dir / "parity.dbpf");
  REQUIRE(loaded.inputs.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(loaded.inputs[i].data == fixture.inputs[i].data);
    CHECK(loaded.references[i] == fixture.references[i]);
  }
  CHECK(parity_max_relative_error(h, loaded) < 1e-3);
}
