#include <gtest/gtest.h>

#include "support.hpp"

using namespace signet;
using signet::testing::grad_check;
using signet::testing::random_tensor;

namespace {

// Closed-form parameter count of the full stack from its layer widths.
std::size_t full_parameter_oracle() {
  const std::size_t conv = (96 * 1 * 11 * 11 + 96) + (256 * 96 * 5 * 5 + 256) + (384 * 256 * 3 * 3 + 384) +
                           (256 * 384 * 3 * 3 + 256);
  const std::size_t flat = 256 * 17 * 25;
  return conv + (flat * 1024 + 1024) + (1024 * 128 + 128);
}

}  // namespace

TEST(Architecture, FullShapeChain) {
  const auto shapes = infer_shapes(ArchitectureConfig::signet());
  const std::vector<Shape> expected = {{96, 145, 210}, {96, 145, 210}, {96, 72, 104}, {256, 72, 104},
                                       {256, 72, 104}, {256, 35, 51},  {384, 35, 51}, {256, 35, 51},
                                       {256, 17, 25},  {108800},       {1024},        {128}};
  EXPECT_EQ(shapes, expected);
}

TEST(Architecture, FullParameterShapesAndCount) {
  const auto cfg = ArchitectureConfig::signet();
  const auto ps = parameter_shapes(cfg);
  ASSERT_EQ(ps.size(), 12u);
  EXPECT_EQ(ps[0].name, "conv1.weight");
  EXPECT_EQ(ps[0].shape, (Shape{96, 1, 11, 11}));
  EXPECT_EQ(ps[8].name, "fc1.weight");
  EXPECT_EQ(ps[8].shape, (Shape{108800, 1024}));
  EXPECT_EQ(ps[11].name, "fc2.bias");
  EXPECT_EQ(parameter_count(cfg), full_parameter_oracle());
}

TEST(Architecture, TinyShapeChain) {
  const auto cfg = ArchitectureConfig::signet_tiny();
  const auto shapes = infer_shapes(cfg);
  EXPECT_EQ(shapes.back(), (Shape{16}));
  EXPECT_EQ(shapes[6], (Shape{16 * 7 * 11}));
}

TEST(Architecture, InvalidChainNamesLayer) {
  auto cfg = ArchitectureConfig::signet_tiny();
  cfg.layers.erase(cfg.layers.begin() + 6);  // drop flatten
  try {
    infer_shapes(cfg);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("layer 6"), std::string::npos) << e.what();
  }
  cfg = ArchitectureConfig::signet_tiny();
  cfg.embedding_dim = 32;
  EXPECT_THROW(infer_shapes(cfg), Error);
  cfg = ArchitectureConfig::signet_tiny();
  cfg.input_height = 4;
  EXPECT_THROW(infer_shapes(cfg), Error);
}

TEST(Architecture, TextRoundTrip) {
  for (const auto& cfg : {ArchitectureConfig::signet(), ArchitectureConfig::signet_tiny()}) {
    const auto text = serialize_architecture(cfg);
    EXPECT_EQ(parse_architecture(text), cfg) << text;
  }
  EXPECT_THROW(parse_architecture("name = x\n"), Error);
  EXPECT_THROW(ArchitectureConfig::preset("huge"), Error);
}

TEST(Model, BuildIsDeterministicInSeed) {
  const auto cfg = ArchitectureConfig::signet_tiny();
  const auto a = build_signet<float>(cfg, 5), b = build_signet<float>(cfg, 5), c = build_signet<float>(cfg, 6);
  EXPECT_EQ(a.parameter("conv1.weight").to_vector(), b.parameter("conv1.weight").to_vector());
  EXPECT_NE(a.parameter("conv1.weight").to_vector(), c.parameter("conv1.weight").to_vector());
  for (double v : a.parameter("fc1.bias").data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(a.parameter_count(), parameter_count(cfg));
}

TEST(Model, RejectsMismatchedParameters) {
  const auto cfg = ArchitectureConfig::signet_tiny();
  auto params = build_signet<float>(cfg, 1).parameters();
  params[2].value = Tensor<float>::zeros({16, 8, 5, 5});
  try {
    Model<float> m(cfg, params);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("conv2.weight"), std::string::npos) << e.what();
  }
}

TEST(Model, EmbedShapesAndInputChecks) {
  const auto m = build_signet<float>(ArchitectureConfig::signet_tiny(), 1);
  Rng rng(1);
  const auto x = random_tensor<float>({3, 1, 32, 48}, rng, 0, 2);
  EXPECT_EQ(embed(m, x, Mode::infer).shape(), (Shape{3, 16}));
  EXPECT_THROW(embed(m, random_tensor<float>({3, 1, 32, 40}, rng), Mode::infer), Error);
  EXPECT_THROW(embed(m, random_tensor<float>({3, 2, 32, 48}, rng), Mode::infer), Error);
  EXPECT_THROW(embed(m, x, Mode::train), Error);
}

TEST(Model, InferIsDeterministicTrainUsesDropout) {
  const auto m = build_signet<float>(ArchitectureConfig::signet_tiny(), 2);
  Rng rng(4);
  const auto x = random_tensor<float>({2, 1, 32, 48}, rng, 0, 2);
  EXPECT_EQ(embed(m, x, Mode::infer).to_vector(), embed(m, x, Mode::infer).to_vector());
  Rng r1(9), r2(9), r3(10);
  const auto t1 = embed(m, x, Mode::train, &r1).to_vector();
  EXPECT_EQ(t1, embed(m, x, Mode::train, &r2).to_vector());
  EXPECT_NE(t1, embed(m, x, Mode::train, &r3).to_vector());
}

TEST(Model, TwinBranchesShareWeights) {
  const auto m = build_signet<float>(ArchitectureConfig::signet_tiny(), 3);
  Rng rng(5);
  const auto a = random_tensor<float>({1, 1, 32, 48}, rng, 0, 2);
  const auto b = random_tensor<float>({1, 1, 32, 48}, rng, 0, 2);
  const auto ea = embed(m, a, Mode::infer), eb = embed(m, b, Mode::infer);
  EXPECT_EQ(pair_distance(ea, ea).item(), 0.0f);
  EXPECT_EQ(pair_distance(ea, eb).item(), pair_distance(eb, ea).item());
  // Embedding a batch equals embedding its rows one by one.
  std::vector<float> both = a.to_vector();
  both.insert(both.end(), b.data().begin(), b.data().end());
  const auto e2 = embed(m, Tensor<float>({2, 1, 32, 48}, both), Mode::infer).to_vector();
  EXPECT_EQ(std::vector<float>(e2.begin(), e2.begin() + 16), ea.to_vector());
  EXPECT_EQ(std::vector<float>(e2.begin() + 16, e2.end()), eb.to_vector());
}

TEST(Model, PairDistanceIsEuclidean) {
  Tensor<double> a({2, 3}, {0, 0, 0, 1, 2, 3});
  Tensor<double> b({2, 3}, {3, 4, 0, 1, 2, 3});
  EXPECT_EQ(pair_distance(a, b).to_vector(), (std::vector<double>{5, 0}));
  EXPECT_THROW(pair_distance(a, Tensor<double>({3, 2}, std::vector<double>(6))), Error);
}

TEST(Model, FullModelGradientMatchesFiniteDifferences) {
  // Whole tiny network in 64-bit mode, infer mode (dropout off).
  const auto m = build_signet<double>(ArchitectureConfig::signet_tiny(), 7);
  Rng rng(7);
  const auto a = random_tensor<double>({2, 1, 32, 48}, rng, 0, 2);
  const auto b = random_tensor<double>({2, 1, 32, 48}, rng, 0, 2);
  std::vector<Tensor<double>> params;
  for (const auto& p : m.parameters()) params.push_back(p.value);
  const auto r = grad_check<double>(
      params, [&] { return sum(square(sub(embed(m, a, Mode::infer), embed(m, b, Mode::infer)))); }, 12, rng,
      1e-6, 1e-8);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Model, ActivationMapsRankedByEnergy) {
  const auto m = build_signet<float>(ArchitectureConfig::signet_tiny(), 1);
  Rng rng(2);
  const auto x = random_tensor<float>({1, 1, 32, 48}, rng, 0, 2);
  const std::size_t last = last_conv_layer(m.config());
  EXPECT_EQ(last, 3u);
  const auto maps = activation_maps(m, x, last);
  ASSERT_EQ(maps.maps.size(), 16u);
  EXPECT_EQ(maps.height, 15u);
  EXPECT_EQ(maps.width, 23u);
  for (std::size_t i = 1; i < maps.ranking.size(); ++i) {
    EXPECT_GE(maps.energy[maps.ranking[i - 1]], maps.energy[maps.ranking[i]]);
  }
  for (std::size_t c = 0; c < 16; ++c) {
    double e = 0;
    for (float v : maps.maps[c]) {
      EXPECT_GE(v, 0.0f);  // after ReLU
      e += static_cast<double>(v) * v;
    }
    EXPECT_NEAR(maps.energy[c], e, 1e-6 * (1 + e));
  }
  EXPECT_THROW(activation_maps(m, x, 1), Error);
  EXPECT_THROW(activation_maps(m, x, 99), Error);
}

TEST(Model, ZeroImageGivesUniformMaps) {
  auto m = build_signet<float>(ArchitectureConfig::signet_tiny(), 1);
  Rng rng(3);
  for (auto& p : m.parameters()) {
    if (p.value.rank() == 1) {
      for (auto& v : p.value.mutable_data()) v = static_cast<float>(uniform01(rng));
    }
  }
  const auto zero = Tensor<float>::zeros({1, 1, 32, 48});
  // The first conv layer sees only zeros and padding: every map is its bias.
  const auto first = activation_maps(m, zero, 0);
  for (std::size_t c = 0; c < first.maps.size(); ++c) {
    for (float v : first.maps[c]) EXPECT_EQ(v, first.maps[c].front());
  }
  // With zero biases every layer stays uniform.
  for (auto& p : m.parameters()) {
    if (p.value.rank() == 1) std::fill(p.value.mutable_data().begin(), p.value.mutable_data().end(), 0.0f);
  }
  for (const auto& map : activation_maps(m, zero, 3).maps) {
    for (float v : map) EXPECT_EQ(v, map.front());
  }
}
