#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "mdjpt/eval.hpp"
#include "mdjpt/model.hpp"
#include "mdjpt/prep.hpp"
#include "mdjpt/pretrain.hpp"
#include "mdjpt/synth.hpp"

using namespace mdjpt;

namespace {

nn::Tensor random_window(std::size_t c, std::size_t t, std::uint64_t seed) {
    nn::Tensor w({c, t});
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (double& x : w.v) x = nd(rng);
    return w;
}

model::ModelConfig desk_model(std::size_t channels) {
    model::ModelConfig cfg;
    cfg.n_channels = channels;
    cfg.patch.patch_len = 125;
    cfg.patch.stride = 125;
    cfg.mlla.hidden_dim = 16;
    cfg.mlla.out_dim = 4;
    cfg.mlla.depth = 1;
    cfg.mlla.n_heads = 2;
    cfg.mlla.mlp_hidden = 32;
    cfg.dynamics.kernels_per_dim = 2;
    cfg.dynamics.attention_len = 3;
    cfg.dynamics.pooling_len = 3;
    return cfg;
}

void bm_encoder_forward_default(benchmark::State& state) {
    model::EncoderModel m(model::ModelConfig{});
    m.init(1);
    nn::Tensor w = random_window(60, 625, 2);
    for (auto _ : state) {
        nn::Graph g;
        auto bound = m.bind(g, false);
        auto out = m.forward(g, bound, w);
        benchmark::DoNotOptimize(out.feature->val[0]);
    }
}

void bm_encoder_forward_desk(benchmark::State& state) {
    model::EncoderModel m(desk_model(16));
    m.init(1);
    nn::Tensor w = random_window(16, 625, 2);
    for (auto _ : state) {
        nn::Graph g;
        auto bound = m.bind(g, false);
        auto out = m.forward(g, bound, w);
        benchmark::DoNotOptimize(out.feature->val[0]);
    }
}

void bm_pretrain_step_desk(benchmark::State& state) {
    const auto dir = std::filesystem::temp_directory_path() / "mdjpt_bench_corpus";
    std::filesystem::remove_all(dir);
    synth::SynthSpec spec;
    spec.n_heldout = 0;
    auto paths = synth::generate_corpus(spec, dir.string());
    std::vector<data::DatasetManifest> manifests;
    for (const auto& p : paths) manifests.push_back(data::load_manifest(p));

    pretrain::PretrainConfig cfg;
    cfg.vm_cap = 2;
    model::EncoderModel m(desk_model(spec.n_channels));
    m.init(3);
    pretrain::AdamState opt;
    pretrain::EpochCache store;
    std::mt19937_64 rng(7);
    for (auto _ : state) {
        auto batch = pretrain::sample_aligned_batch(manifests, store, cfg, rng);
        auto l = pretrain::pretrain_step(m, opt, batch, cfg);
        benchmark::DoNotOptimize(l.total);
    }
    std::filesystem::remove_all(dir);
}

void bm_de_features(benchmark::State& state) {
    nn::Tensor w = random_window(60, 625, 5);
    for (auto _ : state) {
        auto f = eval::de_features(w, 125.0);
        benchmark::DoNotOptimize(f[0]);
    }
}

void bm_prep_pipeline(benchmark::State& state) {
    data::TrialEpoch epoch;
    epoch.data = random_window(16, 5000, 9);
    epoch.sampling_rate_hz = 250.0;
    epoch.channel_names = synth::channel_labels(synth::SynthSpec{});
    epoch.subject_id = "s0";
    epoch.trial_id = "t0";
    epoch.dataset_id = "bench";
    prep::PrepConfig cfg;
    const auto& table = montage::standard_1020_60();
    for (auto _ : state) {
        auto out = prep::run_pipeline(epoch, cfg, table);
        benchmark::DoNotOptimize(out.data[0]);
    }
}

}  // namespace

BENCHMARK(bm_encoder_forward_default)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_encoder_forward_desk)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_pretrain_step_desk)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_de_features)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_prep_pipeline)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
