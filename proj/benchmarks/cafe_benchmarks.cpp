#include <benchmark/benchmark.h>

#include "cafe/channel_modules.hpp"
#include "cafe/feature_store.hpp"
#include "cafe/random.hpp"
#include "cafe/trainer.hpp"

namespace {

using namespace cafe;

struct Batch64 {
  TrainConfig config;
  MaskNetwork net;
  ChannelPartition partition;
  MatrixD inputs;
  MatrixD frozen;
  std::vector<std::uint8_t> labels;
  DropMask drop;
};

Batch64 make_batch(std::size_t rows) {
  Rng rng(1);
  TrainConfig config;
  MaskNetwork net = initial_network(config, 64, 512, 7);
  ChannelPartition partition = make_partition(config, 512, 7);
  MatrixD x(rows, 64), f(rows, 512);
  for (double& v : x.values()) v = rng.normal();
  for (double& v : f.values()) v = rng.uniform(-1.0, 1.0);
  std::vector<std::uint8_t> y(rows);
  for (auto& v : y) v = static_cast<std::uint8_t>(rng.uniform_index(7));
  DropMask drop = sample_drop_mask(partition, rng);
  return {config, std::move(net), std::move(partition), std::move(x), std::move(f), std::move(y), std::move(drop)};
}

void BM_TrainingStep(benchmark::State& state) {
  const Batch64 b = make_batch(static_cast<std::size_t>(state.range(0)));
  const bool grad = state.range(1) != 0;
  for (auto _ : state) {
    auto r = training_step(b.net, b.config, b.partition, b.inputs, b.frozen, b.labels, b.drop, grad);
    benchmark::DoNotOptimize(r.losses.total);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainingStep)->Args({64, 0})->Args({64, 1})->Args({256, 1});

void BM_Predict(benchmark::State& state) {
  const Batch64 b = make_batch(256);
  for (auto _ : state) benchmark::DoNotOptimize(predict(b.net, b.inputs, b.frozen).labels.data());
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_Predict);

void BM_ChannelLosses(benchmark::State& state) {
  const Batch64 b = make_batch(64);
  for (auto _ : state) {
    const PiecewiseMax sep = sep_logits(b.frozen, b.drop, b.partition);
    const SoftmaxXent xent = sep_loss(sep.values, b.labels);
    const DiverseLoss div = div_loss(b.frozen, b.partition);
    ChannelUpstream up{&sep, &xent.grad, 1.5, &div.maxima, 5.0};
    benchmark::DoNotOptimize(backward_channel(b.partition, 64, up).values().data());
  }
}
BENCHMARK(BM_ChannelLosses);

void BM_SampleDropMask(benchmark::State& state) {
  const ChannelPartition part = split_channels(512, 7, Rational{10, 73});
  Rng rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(sample_drop_mask(part, rng).keep.data());
}
BENCHMARK(BM_SampleDropMask);

FeatureDataset make_dataset(std::size_t n) {
  Rng rng(2);
  MatrixF f(n, 512), x(n, 64);
  for (float& v : f.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (float& v : x.values()) v = static_cast<float>(rng.normal());
  std::vector<std::uint8_t> y(n);
  for (auto& v : y) v = static_cast<std::uint8_t>(rng.uniform_index(7));
  return FeatureDataset("bench", std::move(f), std::move(x), std::move(y));
}

void BM_EncodeFeatures(benchmark::State& state) {
  const FeatureDataset ds = make_dataset(420);
  for (auto _ : state) benchmark::DoNotOptimize(encode_features(ds).data());
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(feature_file_size(420, 512, 64)));
}
BENCHMARK(BM_EncodeFeatures);

void BM_DecodeFeatures(benchmark::State& state) {
  const auto bytes = encode_features(make_dataset(420));
  for (auto _ : state) benchmark::DoNotOptimize(decode_features(bytes, "bench").size());
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_DecodeFeatures);

}  // namespace

BENCHMARK_MAIN();
