#include <benchmark/benchmark.h>

#include <random>

#include "wsd/data/synth.hpp"
#include "wsd/detector/decode.hpp"
#include "wsd/detector/network.hpp"
#include "wsd/eval/metrics.hpp"
#include "wsd/ssl/ssl.hpp"
#include "wsd/train/trainer.hpp"

using namespace wsd;

namespace {

std::vector<data::ImageSample> scenes(int size, int n) {
    std::vector<data::ImageSample> out;
    for (int i = 0; i < n; ++i) {
        data::SyntheticSceneSpec spec;
        spec.image_size = size;
        spec.seed = static_cast<std::uint64_t>(i);
        out.push_back(data::generate_scene(spec));
    }
    return out;
}

void BM_Forward(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    const detector::Network net(detector::default_detector_config(size));
    const auto params = net.initial_parameters(1);
    const auto img = detector::normalize(scenes(size, 1)[0].image);
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(img, params));
}
BENCHMARK(BM_Forward)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    const detector::Network net(detector::default_detector_config(size));
    auto params = net.initial_parameters(1);
    const auto data = scenes(size, 16);
    train::TrainOptions opts;
    opts.optimizer.kind = train::OptimizerKind::adam;
    train::Trainer trainer(net, opts, data);
    for (auto _ : state) benchmark::DoNotOptimize(trainer.step(params));
    state.SetItemsProcessed(state.iterations() * opts.batch_size);
}
BENCHMARK(BM_TrainStep)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Decode(benchmark::State& state) {
    const auto cfg = detector::default_detector_config(128);
    auto raw = detector::RawGridOutput::zeros(cfg);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 2.0);
    for (auto& v : raw.grid) v = n(rng);
    const double threshold = state.range(0) / 100.0;
    for (auto _ : state) benchmark::DoNotOptimize(detector::decode(raw, cfg, threshold));
}
BENCHMARK(BM_Decode)->Arg(5)->Arg(15)->Arg(50);

void BM_Match(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> pos(0, 400), jitter(-3, 3), half(6, 14);
    std::vector<eval::Prediction> preds;
    std::vector<eval::LabeledInstance> truths;
    for (int i = 0; i < n; ++i) {
        const double x = pos(rng), y = pos(rng), h = half(rng);
        truths.push_back({data::ClassId::weed, {x - h, y - h, x + h, y + h}, Point{x, y}});
        eval::Prediction p;
        p.bbox = {x - h + jitter(rng), y - h + jitter(rng), x + h + jitter(rng), y + h + jitter(rng)};
        p.stem = Point{x + jitter(rng), y + jitter(rng)};
        preds.push_back(p);
    }
    for (auto _ : state) benchmark::DoNotOptimize(eval::match(preds, truths));
}
BENCHMARK(BM_Match)->RangeMultiplier(2)->Range(4, 64);

void BM_SimScore(benchmark::State& state) {
    const auto size = static_cast<std::size_t>(state.range(0));
    ssl::WeedBank bank(size, 1);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(32);
    for (std::size_t i = 0; i < size; ++i) {
        for (auto& x : v) x = n(rng);
        bank.add(std::to_string(i), v);
    }
    for (auto& x : v) x = n(rng);
    for (auto _ : state) benchmark::DoNotOptimize(ssl::sim_score(v, bank));
}
BENCHMARK(BM_SimScore)->Arg(64)->Arg(4096);

}  // namespace

BENCHMARK_MAIN();
