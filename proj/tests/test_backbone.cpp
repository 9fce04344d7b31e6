#include <gtest/gtest.h>

#include "cva/backbone.hpp"
#include "cva/model.hpp"

namespace cva {
namespace {

TEST(Backbone, DefaultLevelSizes) {
  Rng rng(0);
  ParameterSet params;
  Backbone net(BackboneConfig{}, rng, params);
  const auto sizes = net.level_sizes();
  EXPECT_EQ(sizes[0], (std::array<std::size_t, 2>{24, 24}));
  EXPECT_EQ(sizes[1], (std::array<std::size_t, 2>{12, 12}));
  EXPECT_EQ(sizes[2], (std::array<std::size_t, 2>{6, 6}));
  const auto frame = generate_video(1, GeneratorConfig{}).frames[4];
  const FeaturePyramid p = net.extract(frame);
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    EXPECT_EQ(p[i].shape(), (Shape{64, sizes[i][0], sizes[i][1]}));
  }
  const FeaturePyramid raw = net.stage_features(image_to_tensor(frame));
  EXPECT_EQ(raw[0].dim(0), 32u);
  EXPECT_EQ(raw[1].dim(0), 64u);
  EXPECT_EQ(raw[2].dim(0), 128u);
}

TEST(Backbone, StemStrideFourLevelSizes) {
  Rng rng(0);
  ParameterSet params;
  BackboneConfig c;
  c.stem_stride = 4;
  Backbone net(c, rng, params);
  const auto sizes = net.level_sizes();
  EXPECT_EQ(sizes[0], (std::array<std::size_t, 2>{12, 12}));
  EXPECT_EQ(sizes[2], (std::array<std::size_t, 2>{3, 3}));
  const auto p = net.extract(Image(96, 96, 0.3));
  EXPECT_EQ(p[2].shape(), (Shape{64, 3, 3}));
}

TEST(Backbone, DeterministicAndShapeIndependentOfContent) {
  Rng rng(1);
  ParameterSet params;
  Backbone net(BackboneConfig{}, rng, params);
  const auto v = generate_video(2, GeneratorConfig{});
  EXPECT_TRUE(net.extract(v.frames[3]).equals(net.extract(v.frames[3])));
  const auto a = net.extract(v.frames[0]), b = net.extract(Image(96, 96, 0.9));
  for (std::size_t i = 0; i < kPyramidLevels; ++i) EXPECT_EQ(a[i].shape(), b[i].shape());
}

TEST(Backbone, WrongResolutionRejected) {
  Rng rng(1);
  ParameterSet params;
  Backbone net(BackboneConfig{}, rng, params);
  EXPECT_THROW(net.extract(Image(64, 96, 0.5)), DimensionError);
}

TEST(Backbone, SharedBetweenStreams) {
  ModelConfig mc;
  mc.backbone.stem_stride = 4;
  CvaNet net(mc, 3);
  Rng rng(0);
  ParameterSet solo;
  Backbone reference(mc.backbone, rng, solo);
  std::size_t owned = 0;
  for (const auto& item : net.params().items()) owned += item.name.starts_with("backbone.");
  EXPECT_EQ(owned, solo.size());

  const auto v = generate_video(7, GeneratorConfig{});
  const std::array<Image, 3> ordered{v.frames[4], v.frames[5], v.frames[6]};
  const std::array<Image, 3> shuffled{v.frames[11], v.frames[2], v.frames[19]};
  const ClipForward f = net.forward(ordered, shuffled);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_TRUE(f.local[j].equals(net.backbone().extract(ordered[j])));
    EXPECT_TRUE(f.global[j].equals(net.backbone().extract(shuffled[j])));
  }
}

}  // namespace
}  // namespace cva
