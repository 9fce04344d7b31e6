#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cva/checkpoint.hpp"

namespace cva {
namespace {

Checkpoint sample() {
  Checkpoint c;
  Rng rng(9);
  c.tensors.push_back({"a.weight", normal_tensor({3, 2}, 1.0, rng)});
  c.tensors.push_back({"b", Tensor::vector({1.0 / 3.0, -0.0, 1e-300})});
  c.tensors.push_back({"s", Tensor::scalar(42.0)});
  c.metadata = {{"note", "x"}};
  return c;
}

TEST(Checkpoint, ByteExactRoundTrip) {
  const Checkpoint c = sample();
  const std::string bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  ASSERT_EQ(back.tensors.size(), c.tensors.size());
  for (std::size_t i = 0; i < c.tensors.size(); ++i) {
    EXPECT_EQ(back.tensors[i].name, c.tensors[i].name);
    EXPECT_TRUE(back.tensors[i].tensor.equals(c.tensors[i].tensor));
  }
  EXPECT_EQ(back.metadata, c.metadata);
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "cva_ckpt_test.bin";
  save_checkpoint(path, sample());
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(sample()));
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsTruncatedData) {
  std::string bytes = encode_checkpoint(sample());
  bytes.resize(bytes.size() - 8);
  EXPECT_THROW(decode_checkpoint(bytes), CheckpointError);
  EXPECT_THROW(decode_checkpoint("abc"), CheckpointError);
}

TEST(Checkpoint, HeaderIsLittleEndianLength) {
  const std::string bytes = encode_checkpoint(sample());
  std::uint64_t n = 0;
  for (int i = 7; i >= 0; --i) n = (n << 8) | static_cast<unsigned char>(bytes[static_cast<std::size_t>(i)]);
  const auto header = nlohmann::json::parse(bytes.substr(8, n));
  EXPECT_EQ(header.at("a.weight").at("shape"), nlohmann::json::array({3, 2}));
  EXPECT_EQ(header.at("b").at("offset"), 6 * 8);
}

}  // namespace
}  // namespace cva
