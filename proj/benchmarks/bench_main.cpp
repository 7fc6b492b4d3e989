#include <benchmark/benchmark.h>

#include "fgd/attention.hpp"
#include "fgd/detector.hpp"
#include "fgd/synth.hpp"

namespace fgd {
namespace {

Tensor<float> random_tensor(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  Tensor<float> t(std::move(s));
  for (auto& v : t.storage()) v = d(rng);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    Tape<float> tape;
    benchmark::DoNotOptimize(matmul(tape.constant(a), tape.constant(b)).value().data().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_Conv2dForwardBackward(benchmark::State& state) {
  Rng rng(3);
  Conv2dLayer<float> conv("c", 4, 8, 3, 2, 1, rng);
  const auto x = random_tensor({static_cast<std::size_t>(state.range(0)), 4, 32, 32}, 4);
  for (auto _ : state) {
    Tape<float> tape;
    auto y = sum(conv.forward(tape, tape.constant(x)));
    tape.backward(y);
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(1)->Arg(16);

void BM_NonLocalForward(benchmark::State& state) {
  Rng rng(5);
  NonLocalBlock<float> blk("nl", 16, rng);
  blk.gamma = 0.5f;
  const auto x = random_tensor({static_cast<std::size_t>(state.range(0)), 16, 8, 8}, 6);
  for (auto _ : state) {
    Tape<float> tape;
    benchmark::DoNotOptimize(blk.forward(tape, tape.constant(x)).value().data().data());
  }
}
BENCHMARK(BM_NonLocalForward)->Arg(5)->Arg(20)->Arg(40);

void BM_ClassifyWindow(benchmark::State& state) {
  Rng rng(7);
  BiStreamNet<float> net(NetConfig::for_variant(static_cast<StreamVariant>(state.range(1))), rng);
  net.set_gamma(1.0f);
  SynthConfig sc;
  sc.min_length = sc.max_length = 40;
  const auto clip = slice_frames(gen_sequence(kReach, sc, 1), 0, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(net.classify(clip));
}
BENCHMARK(BM_ClassifyWindow)
    ->Args({10, static_cast<int>(StreamVariant::bi_stream)})
    ->Args({40, static_cast<int>(StreamVariant::bi_stream)})
    ->Args({10, static_cast<int>(StreamVariant::bi_stream_att)})
    ->Args({40, static_cast<int>(StreamVariant::bi_stream_att)})
    ->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace fgd

BENCHMARK_MAIN();
