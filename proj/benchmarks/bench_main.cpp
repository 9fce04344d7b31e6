#include <benchmark/benchmark.h>

#include "cva/fusion.hpp"
#include "cva/model.hpp"
#include "cva/ops.hpp"
#include "cva/train.hpp"

namespace cva {
namespace {

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = normal_tensor({n, n}, 1.0, rng), b = normal_tensor({n, n}, 1.0, rng);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).data().data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(144)->Arg(576);

void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Tensor x = normal_tensor({c, 48, 48}, 1.0, rng);
  const Tensor w = normal_tensor({c, c, 3, 3}, 0.1, rng), b = normal_tensor({c}, 0.1, rng);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, {1, 1}).data().data());
}
BENCHMARK(BM_Conv2d)->Arg(16)->Arg(32);

void BM_InterFusionLevel(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const Tensor l = normal_tensor({64, side, side}, 1.0, rng), g = normal_tensor({64, side, side}, 1.0, rng);
  const auto hat = ChannelProjection::random(64, rng), tilde = ChannelProjection::random(64, rng);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(inter_fuse_level(l, g, hat, tilde).data().data());
}
BENCHMARK(BM_InterFusionLevel)->Arg(6)->Arg(12)->Arg(24);

void clip_forward(benchmark::State& state, bool with_grad) {
  ModelConfig config;
  config.backbone.stem_stride = static_cast<std::size_t>(state.range(0));
  CvaNet model(config, 4);
  GeneratorConfig g;
  const VideoSample v = generate_video(5, g);
  const Clip clip = sample_clip(v, 10, inference_plan(v));
  for (auto _ : state) {
    if (with_grad) {
      const ClipForward f = model.forward(clip.frames, clip.shuffled);
      model.params().zero_grad();
      backward(sum(f.detections.boxes));
    } else {
      NoGradGuard no_grad;
      benchmark::DoNotOptimize(model.forward(clip.frames, clip.shuffled).detections.boxes.data().data());
    }
  }
}

void BM_ClipForward(benchmark::State& state) { clip_forward(state, false); }
void BM_ClipForwardBackward(benchmark::State& state) { clip_forward(state, true); }
BENCHMARK(BM_ClipForward)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ClipForwardBackward)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace cva

BENCHMARK_MAIN();
