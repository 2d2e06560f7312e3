#include <gtest/gtest.h>

#include "support.hpp"

using namespace signet;
using signet::testing::random_tensor;
using signet::testing::TempDir;

namespace {

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Checkpoint, RoundTripGivesBitIdenticalEmbeddings) {
  TempDir dir;
  const auto m = build_signet<float>(ArchitectureConfig::signet_tiny(), 21);
  save_checkpoint(dir / "m.sgnt", m, {{"data.std", "12.5"}});
  const auto ck = load_checkpoint(dir / "m.sgnt");
  EXPECT_EQ(ck.config, m.config());
  EXPECT_EQ(ck.meta.at("data.std"), "12.5");
  const auto back = model_from_checkpoint(ck);
  Rng rng(1);
  const auto x = random_tensor<float>({4, 1, 32, 48}, rng, 0, 3);
  EXPECT_EQ(embed(m, x, Mode::infer).to_vector(), embed(back, x, Mode::infer).to_vector());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    EXPECT_EQ(m.parameters()[i].name, back.parameters()[i].name);
    EXPECT_EQ(m.parameters()[i].value.to_vector(), back.parameters()[i].value.to_vector());
  }
  EXPECT_FALSE(std::filesystem::exists(dir / "m.sgnt.tmp"));
}

TEST(Checkpoint, OptimizerEntriesRoundTrip) {
  const auto m = build_signet<float>(ArchitectureConfig::signet_tiny(), 2);
  Rng rng(3);
  std::vector<NamedTensor<float>> opt;
  for (const auto& p : m.parameters()) opt.push_back({p.name, random_tensor<float>(p.value.shape(), rng, 0, 1)});
  const auto ck = decode_checkpoint(encode_checkpoint(m, {}, opt));
  ASSERT_EQ(ck.optimizer.size(), opt.size());
  for (std::size_t i = 0; i < opt.size(); ++i) {
    EXPECT_EQ(ck.optimizer[i].name, opt[i].name);
    EXPECT_EQ(ck.optimizer[i].value.to_vector(), opt[i].value.to_vector());
  }
  EXPECT_EQ(ck.parameters.size(), m.parameters().size());
}

TEST(Checkpoint, HeaderLayout) {
  const auto m = build_signet<float>(ArchitectureConfig::signet_tiny(), 2);
  const auto bytes = encode_checkpoint(m);
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(bytes.substr(0, 4), "SGNT");
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  EXPECT_EQ(bytes[5], 0);
  // Two text entries plus one per parameter.
  EXPECT_EQ(static_cast<std::size_t>(static_cast<unsigned char>(bytes[8])), 2 + m.parameters().size());
}

TEST(Checkpoint, CorruptMagicIsCleanError) {
  TempDir dir;
  const auto m = build_signet<float>(ArchitectureConfig::signet_tiny(), 2);
  auto bytes = encode_checkpoint(m);
  bytes[0] = 'X';
  write_file_atomic(dir / "bad.sgnt", bytes);
  const auto msg = error_of([&] { load_checkpoint(dir / "bad.sgnt"); });
  EXPECT_NE(msg.find("magic"), std::string::npos) << msg;
  EXPECT_NE(msg.find("bad.sgnt"), std::string::npos) << msg;
}

TEST(Checkpoint, MalformedFilesAreRejected) {
  const auto m = build_signet<float>(ArchitectureConfig::signet_tiny(), 2);
  const auto bytes = encode_checkpoint(m);
  EXPECT_NE(error_of([&] { decode_checkpoint(bytes.substr(0, bytes.size() - 3)); }).find("truncated"),
            std::string::npos);
  EXPECT_NE(error_of([&] { decode_checkpoint(bytes + "xx"); }).find("trailing"), std::string::npos);
  auto wrong_version = bytes;
  wrong_version[4] = 7;
  EXPECT_NE(error_of([&] { decode_checkpoint(wrong_version); }).find("version"), std::string::npos);
  EXPECT_THROW(decode_checkpoint(""), Error);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.sgnt"), Error);
}

TEST(Checkpoint, CompatibilityCheckNamesTensor) {
  const auto tiny = decode_checkpoint(encode_checkpoint(build_signet<float>(ArchitectureConfig::signet_tiny(), 1)));
  EXPECT_NO_THROW(check_compatible(ArchitectureConfig::signet_tiny(), tiny));
  auto other = ArchitectureConfig::signet_tiny();
  other.layers[0].units = 6;
  const auto msg = error_of([&] { check_compatible(other, tiny); });
  EXPECT_NE(msg.find("conv1.weight"), std::string::npos) << msg;
  EXPECT_NE(error_of([&] { check_compatible(ArchitectureConfig::signet(), tiny); }), "");
}

TEST(Checkpoint, AtomicWriteReplacesTarget) {
  TempDir dir;
  write_file_atomic(dir / "f", "first");
  write_file_atomic(dir / "f", "second");
  EXPECT_EQ(read_file(dir / "f"), "second");
  EXPECT_FALSE(std::filesystem::exists(dir / "f.tmp"));
  EXPECT_THROW(write_file_atomic(dir / "missing" / "f", "x"), Error);
}
