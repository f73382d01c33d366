#include <benchmark/benchmark.h>

#include "danet/imaging.hpp"
#include "danet/model.hpp"
#include "danet/objectives.hpp"
#include "danet/rng.hpp"

using namespace danet;

namespace {

imaging::RawImage random_raw(int w, int h, Rng& rng) {
  imaging::RawImage img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<std::size_t>(w) * h);
  for (auto& v : img.pixels) v = rng.uniform();
  return img;
}

void BM_Canonicalize(benchmark::State& state) {
  Rng rng(1);
  const auto img = random_raw(534, 408, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(imaging::canonicalize(img, 256, 3));
  }
}
BENCHMARK(BM_Canonicalize);

void BM_Augment(benchmark::State& state) {
  Rng rng(2);
  const auto canon = imaging::canonicalize(random_raw(256, 256, rng), 256, 3);
  imaging::AugmentConfig cfg;
  Rng arng(3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(imaging::augment(canon, cfg, arng));
  }
}
BENCHMARK(BM_Augment);

void BM_EncoderForward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  model::DeskEncoder encoder = model::DeskEncoder::desk(3, 4);
  Rng rng(5);
  Tensor x({3, side, side});
  for (auto& v : x.data) v = rng.uniform();
  for (auto _ : state) {
    benchmark::DoNotOptimize(encoder.forward(x));
  }
}
BENCHMARK(BM_EncoderForward)->Arg(64)->Arg(256);

void BM_BatchGradients(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  model::DeskEncoder encoder = model::DeskEncoder::desk(3, 6);
  auto head = model::init_head(encoder.feature_dim(), 2, 7);
  Rng rng(8);
  objectives::BatchTensors batch;
  for (int i = 0; i < 12; ++i) {
    Tensor x({3, side, side});
    for (auto& v : x.data) v = rng.uniform();
    if (i < 6) {
      batch.labeled_inputs.push_back(std::move(x));
      batch.labels.push_back(i % 2);
    } else {
      batch.unlabeled_inputs.push_back(std::move(x));
    }
  }
  for (auto _ : state) {
    encoder.zero_grad();
    head.W.zero_grad();
    benchmark::DoNotOptimize(objectives::compute_gradients(batch, encoder, head, 0.1));
  }
}
BENCHMARK(BM_BatchGradients)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
