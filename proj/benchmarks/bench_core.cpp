#include <benchmark/benchmark.h>

#include "mmadapt/ensemble.hpp"
#include "mmadapt/metrics.hpp"
#include "mmadapt/ops.hpp"
#include "mmadapt/rng.hpp"
#include "mmadapt/segnet.hpp"

namespace {

using namespace mmadapt;

Tensor random_image(std::size_t side, std::uint64_t seed) {
  Tensor t({1, side, side});
  Rng rng(seed);
  for (auto& v : t.values()) v = rng.uniform();
  return t;
}

LabelMap half_labels(std::size_t side) {
  LabelMap m(side, side);
  for (std::size_t i = 0; i < m.size() / 2; ++i) m.data[i] = 1;
  return m;
}

void BM_Conv3x3(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  Tensor x({8, side, side}, 0.5);
  const Var k = Var::constant(Tensor({8, 8, 3, 3}, 0.1));
  const Var input = Var::constant(x);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(input, k, 1).value().data());
  }
}
BENCHMARK(BM_Conv3x3)->Arg(24)->Arg(48)->Arg(96);

void BM_SegNetInference(benchmark::State& state) {
  const SegNet net = init_network({}, 1);
  const Tensor img = random_image(96, 2);
  for (auto _ : state) benchmark::DoNotOptimize(predict_probs(net, img).data());
}
BENCHMARK(BM_SegNetInference)->Unit(benchmark::kMillisecond);

void BM_SegNetTrainStep(benchmark::State& state) {
  SegNet net = init_network({}, 1);
  const Tensor img = random_image(96, 2);
  const LabelMap target = half_labels(96);
  for (auto _ : state) {
    backward(cross_entropy(forward(net, img).probs, target));
  }
}
BENCHMARK(BM_SegNetTrainStep)->Unit(benchmark::kMillisecond);

void BM_SegNetAuxTrainStep(benchmark::State& state) {
  SegNet net = init_network({}, 1);
  net.attach_aux_decoders();
  const Tensor img = random_image(96, 2);
  const LabelMap target = half_labels(96);
  for (auto _ : state) {
    const AuxForwardResult r = forward_with_aux(net, img, 3);
    Var loss = cross_entropy(r.main_probs, target);
    for (const auto& a : r.aux_probs) loss = add(loss, cross_entropy(a, target));
    backward(loss);
  }
}
BENCHMARK(BM_SegNetAuxTrainStep)->Unit(benchmark::kMillisecond);

// Teachers 0..n-1 own classes 1..n.
std::vector<Tensor> teacher_outputs(std::size_t n, std::vector<SegNet>& nets) {
  std::vector<Tensor> probs;
  const Tensor img = random_image(96, 5);
  for (std::size_t i = 0; i < n; ++i) {
    nets.push_back(init_network({}, 10 + i, {0, static_cast<int>(i) + 1}));
    probs.push_back(predict_probs(nets.back(), img));
  }
  return probs;
}

void BM_SelectionMap(benchmark::State& state) {
  std::vector<SegNet> nets;
  const auto probs = teacher_outputs(static_cast<std::size_t>(state.range(0)), nets);
  const TeacherPool pool(nets);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_selection_map(pool.registry, probs, EnsembleStrategy::certainty_norm).selected.data());
  }
}
BENCHMARK(BM_SelectionMap)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_FeatureAggregationStep(benchmark::State& state) {
  std::vector<SegNet> nets;
  const auto probs = teacher_outputs(static_cast<std::size_t>(state.range(0)), nets);
  const TeacherPool pool(nets);
  const Tensor img = random_image(96, 5);
  std::vector<TeacherTaps> taps;
  std::vector<FeatureProjector::TapChannels> channels;
  for (const auto& t : nets) {
    const ForwardResult r = forward(t, img);
    taps.push_back({r.taps.low.value(), r.taps.high.value()});
    channels.push_back({r.taps.low.value().dim(0), r.taps.high.value().dim(0)});
  }
  const SelectionMap sel = build_selection_map(pool.registry, probs, EnsembleStrategy::certainty_norm);
  SegNet student = init_student(pool.registry, {}, 1);
  const ForwardResult s0 = forward(student, img);
  FeatureProjector proj({s0.taps.low.value().dim(0), s0.taps.high.value().dim(0)}, channels, 32, 2);
  for (auto _ : state) {
    backward(feature_agg_loss(forward(student, img).taps, taps, proj, sel));
  }
}
BENCHMARK(BM_FeatureAggregationStep)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_SurfaceDistance(benchmark::State& state) {
  BinaryMask a(96, 96), b(96, 96);
  for (std::size_t y = 20; y < 70; ++y) {
    for (std::size_t x = 25; x < 60; ++x) a.set(y, x);
  }
  for (std::size_t y = 24; y < 75; ++y) {
    for (std::size_t x = 20; x < 58; ++x) b.set(y, x);
  }
  for (auto _ : state) benchmark::DoNotOptimize(average_surface_distance(a, b));
}
BENCHMARK(BM_SurfaceDistance)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
