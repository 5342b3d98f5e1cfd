#include <benchmark/benchmark.h>

#include "stan/harness.hpp"

using namespace stan;

namespace {

ModelConfig default_cfg() {
    ModelConfig cfg;
    cfg.zero_init_branch = false;
    return cfg;
}

void BM_MatmulForward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(1);
    Tensor a = Tensor::randn({n, n}, rng);
    Tensor b = Tensor::randn({n, n}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_MatmulForward)->Arg(64)->Arg(256);

void BM_MatmulBackward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(1);
    Tensor a = Tensor::randn({n, n}, rng).set_requires_grad(true);
    Tensor b = Tensor::randn({n, n}, rng).set_requires_grad(true);
    for (auto _ : state) {
        a.zero_grad();
        b.zero_grad();
        Tensor loss = sum(matmul(a, b));
        loss.backward();
        benchmark::DoNotOptimize(a.grad());
    }
}
BENCHMARK(BM_MatmulBackward)->Arg(64)->Arg(256);

void BM_BranchForward(benchmark::State& state) {
    ModelConfig cfg = default_cfg();
    cfg.cross_frame_variant = state.range(0) == 0 ? CrossFrameVariant::self_attention
                                                  : CrossFrameVariant::conv3d;
    Rng rng(2);
    StanParams params = StanParams::init(cfg, rng);
    std::vector<LevelBatch> levels;
    for (int k = 0; k < cfg.K; ++k)
        levels.push_back({k + 1, Tensor::randn({1, cfg.T, cfg.L() + 1, cfg.D}, rng)});
    for (auto _ : state) {
        Rng drop(0);
        benchmark::DoNotOptimize(stan_forward(levels, params, cfg, false, drop));
    }
}
BENCHMARK(BM_BranchForward)->Arg(0)->Arg(1)->ArgNames({"variant"});

void BM_BackboneForward(benchmark::State& state) {
    ModelConfig cfg = default_cfg();
    Rng rng(3);
    BackboneParams params = BackboneParams::init(cfg, rng);
    params.freeze();
    Tensor frames = Tensor::randn({cfg.T, 1, cfg.frame_px_h(), cfg.frame_px_w()}, rng);
    for (auto _ : state)
        benchmark::DoNotOptimize(backbone_forward_multilevel(frames, params, cfg));
}
BENCHMARK(BM_BackboneForward);

void BM_TrainStep(benchmark::State& state) {
    RunConfig run;
    run.n_per_class = 4;
    run.batch_size = 32;
    Dataset ds = generate_dataset(0, run.n_per_class, run.model);
    VideoTextModel model = make_model(run);
    std::vector<BackboneOutput> feats = precompute_features(model, ds);
    std::vector<const BackboneOutput*> batch;
    for (int i = 0; i < run.batch_size; ++i) batch.push_back(&feats[i]);
    ParamList params = model.trainable_params();
    AdamState opt;
    for (auto _ : state) {
        for (auto& [name, p] : params) p.zero_grad();
        Rng drop(7);
        Tensor vids = model.video_embeddings_batch(batch, true, drop);
        std::vector<int> labels;
        for (int i = 0; i < run.batch_size; ++i)
            labels.push_back(static_cast<int>(ds.clips[i].label));
        Tensor loss = cross_entropy_logits(model.class_logits(vids), labels);
        loss.backward();
        adamw_step(params, opt, 1e-3, 0.9, 0.999, 1e-8, 0.0);
    }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
