#include <benchmark/benchmark.h>

#include "tagan/corpus.hpp"
#include "tagan/inference.hpp"
#include "tagan/training.hpp"

namespace {

using namespace tagan;

AudioClip NoiseClip(std::size_t samples) {
  AudioClip clip;
  Rng rng(1);
  for (std::size_t i = 0; i < samples; ++i) clip.samples.push_back(rng.Uniform(-0.5, 0.5));
  return clip;
}

void BM_MfccFrame(benchmark::State& state) {
  const MfccExtractor mfcc(MfccConfig{}, FrameSpec{});
  const AudioClip clip = NoiseClip(200);
  for (auto _ : state) benchmark::DoNotOptimize(mfcc.Compute(clip.samples));
}
BENCHMARK(BM_MfccFrame);

void BM_ExtractFeaturesSecond(benchmark::State& state) {
  const AudioClip clip = NoiseClip(8000);
  const MfccExtractor mfcc(MfccConfig{}, FrameSpec{});
  for (auto _ : state) benchmark::DoNotOptimize(ExtractFeatures(clip, FrameSpec{}, mfcc));
}
BENCHMARK(BM_ExtractFeaturesSecond);

void BM_EncoderWindow(benchmark::State& state) {
  ModelShape shape;
  shape.hidden = static_cast<int>(state.range(0));
  Model<float> model(shape);
  model.Init(1);
  Rng rng(2);
  Matrix<float> window(100, shape.input_dim);
  for (Eigen::Index i = 0; i < window.size(); ++i) window.data()[i] = static_cast<float>(rng.Uniform());
  for (auto _ : state) benchmark::DoNotOptimize(Encode(model, window));
}
BENCHMARK(BM_EncoderWindow)->Arg(32)->Arg(64)->Arg(128);

// One generator step on a batch of 32 windows of 100 frames.
void BM_TrainBatch(benchmark::State& state) {
  ModelShape shape;
  Model<float> model(shape);
  model.Init(1);
  Rng rng(3);
  std::vector<PreparedWindow> windows(32);
  for (auto& w : windows) {
    w.input = RowMatrixXd(100, shape.input_dim);
    w.future = RowMatrixXd(100, shape.future_dim);
    for (Eigen::Index i = 0; i < w.input.size(); ++i) w.input.data()[i] = rng.Uniform();
    for (Eigen::Index i = 0; i < w.future.size(); ++i) w.future.data()[i] = rng.Uniform();
    for (int t = 0; t < 100; ++t) w.labels.push_back(static_cast<std::uint8_t>(t / 50));
  }
  std::vector<const PreparedWindow*> batch;
  for (const auto& w : windows) batch.push_back(&w);
  const Matrix<float> noise = DrawNoise<float>(rng, 32, shape.noise_dim);
  const Phase phase = state.range(0) == 0 ? Phase::kGenerator : Phase::kDiscriminator;
  const TrainConfig cfg;
  for (auto _ : state) {
    model.AllParams().ZeroGrad();
    benchmark::DoNotOptimize(AccumulateBatchGradients<float>(model, batch, noise, phase, cfg));
  }
}
BENCHMARK(BM_TrainBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

// Full prediction path for one second of audio at H = 64.
void BM_PredictSecond(benchmark::State& state) {
  SyntheticSpec spec;
  spec.clips = 1;
  spec.clip_seconds = 10.0;
  const AudioClip clip = SynthesizeClips(spec).front().clip;
  Checkpoint ckpt{CheckpointMeta{}, Model<float>(ModelShape{})};
  const FeatureSequence f = ExtractFeatures(clip, ckpt.meta.frame, ckpt.meta.mfcc);
  ckpt.meta.normalization = FitNormalization(std::span<const FeatureSequence>(&f, 1), 80);
  ckpt.model.Init(1);
  for (auto _ : state) benchmark::DoNotOptimize(PredictUtterance(clip, ckpt));
  state.counters["audio_seconds"] =
      benchmark::Counter(10.0 * static_cast<double>(state.iterations()), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_PredictSecond)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
