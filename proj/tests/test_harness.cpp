#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "stan/harness.hpp"
#include "stan/weights_io.hpp"

using namespace stan;

namespace {

ModelConfig tiny_model() {
    ModelConfig cfg;
    cfg.T = 4;
    cfg.grid_h = 2;
    cfg.grid_w = 2;
    cfg.patch_size = 2;
    cfg.D = 8;
    cfg.depth = 2;
    cfg.heads = 2;
    cfg.K = 2;
    cfg.level_range_end = 2;
    cfg.text_vocab = 32;
    cfg.text_len = 8;
    cfg.text_depth = 1;
    return cfg;
}

RunConfig tiny_run() {
    RunConfig run;
    run.model = tiny_model();
    run.epochs = 1;
    run.batch_size = 8;
    run.n_per_class = 2;
    return run;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/stan_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("adamw leaves parameters unchanged on zero gradients at zero decay") {
    ParamList params = {{"p", Tensor::from({3}, {1.0, -2.0, 3.0})}};
    params[0].second.set_requires_grad(true);
    params[0].second.zero_grad();
    AdamState state;
    adamw_step(params, state, 0.1, 0.9, 0.999, 1e-8, 0.0);
    CHECK(params[0].second.values() == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("adamw single-step hand computation") {
    // One scalar, g = 0.5, lr = 0.1, wd = 0.02, fresh moments.
    Tensor p = Tensor::scalar(2.0).set_requires_grad(true);
    p.grad()[0] = 0.5;
    ParamList params = {{"p", p}};
    AdamState state;
    adamw_step(params, state, 0.1, 0.9, 0.999, 1e-8, 0.02);
    // decay first: 2.0 - 0.1*0.02*2.0 = 1.996
    // m = 0.05, v = 0.00025; mhat = 0.5, vhat = 0.25
    // p = 1.996 - 0.1 * 0.5 / (0.5 + 1e-8)
    const double expect = 1.996 - 0.1 * 0.5 / (0.5 + 1e-8);
    CHECK(std::abs(params[0].second.values()[0] - expect) < 1e-12);
    CHECK(state.step == 1);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
    CHECK(cosine_lr(0.1, 0, 100) == doctest::Approx(0.1));
    CHECK(cosine_lr(0.1, 99, 100) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_lr(0.2, 1, 2) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_lr(0.1, 49, 99) == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(cosine_lr(0.1, 0, 1) == doctest::Approx(0.1)); // degenerate run
}

TEST_CASE("training decreases the loss and leaves the backbone untouched") {
    RunConfig run = tiny_run();
    run.epochs = 4;
    run.lr_branch = 5e-3;
    Dataset ds = generate_dataset(run.seed, run.n_per_class, run.model);
    TrainResult result = train(run, ds);
    REQUIRE_FALSE(result.loss_trace.empty());
    CHECK(result.loss_trace.back() < result.loss_trace.front());
}

TEST_CASE("training at zero learning rate moves nothing") {
    RunConfig run = tiny_run();
    run.lr_branch = 1e-30; // validate() rejects exact zero; this is effectively it
    run.weight_decay = 0.0;
    Dataset ds = generate_dataset(run.seed, run.n_per_class, run.model);
    VideoTextModel before = make_model(run);
    TrainResult result = train(run, ds);
    ParamList a = before.trainable_params();
    ParamList b = result.model.trainable_params();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i)
        for (int j = 0; j < a[i].second.size(); ++j)
            CHECK(std::abs(a[i].second.values()[j] - b[i].second.values()[j]) < 1e-25);
}

TEST_CASE("train is deterministic in the run seed") {
    RunConfig run = tiny_run();
    Dataset ds = generate_dataset(run.seed, run.n_per_class, run.model);
    TrainResult a = train(run, ds);
    TrainResult b = train(run, ds);
    CHECK(a.loss_trace == b.loss_trace);
    ParamList pa = a.model.trainable_params();
    ParamList pb = b.model.trainable_params();
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second.values() == pb[i].second.values());
}

TEST_CASE("retrieval training and evaluation run end to end") {
    RunConfig run = tiny_run();
    run.task = "retrieval";
    run.batch_size = 8;
    Dataset ds = generate_retrieval_dataset(run.seed, run.model);
    TrainResult result = train(run, ds);
    MetricsReport m = evaluate(result.model, ds, "retrieval", false);
    CHECK(m.r_at.at(1) >= 0.0);
    CHECK(m.r_at.at(10) >= m.r_at.at(1));
    CHECK(m.median_rank >= 1.0);
    MetricsReport md = evaluate(result.model, ds, "retrieval", true); // DSL path
    CHECK(md.r_at.at(1) >= 0.0);
    CHECK_THROWS_AS(evaluate(result.model, ds, "recognition", true), UsageError);
}

TEST_CASE("weight files round-trip through save and load") {
    RunConfig run = tiny_run();
    VideoTextModel model = make_model(run);
    TempFile f("weights.bin");
    ParamList params = model.trainable_params();
    save_weights(params, f.path);

    VideoTextModel other = make_model(run);
    for (auto& [name, p] : other.trainable_params())
        for (auto& v : p.mutable_values()) v += 1.0;
    ParamList loaded = other.trainable_params();
    load_weights(loaded, f.path);
    ParamList orig = model.trainable_params();
    for (size_t i = 0; i < orig.size(); ++i)
        CHECK(loaded[i].second.values() == orig[i].second.values());
}

TEST_CASE("experiment suites produce the expected rows") {
    RunConfig run = tiny_run();
    run.epochs = 1;
    run.n_per_class = 1;
    run.batch_size = 8;

    auto rows = run_experiment_suite(run, "ablation");
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].variant == "1_baseline");
    CHECK_FALSE(rows[0].cross);
    CHECK(rows[5].variant == "6_full");
    CHECK(rows[5].cross);
    CHECK(rows[5].intra);
    CHECK(rows[5].branch);
    CHECK(rows[5].multilevel);

    auto sweep = run_experiment_suite(run, "level_sweep");
    CHECK(sweep.size() == 6); // three intervals plus three range ends

    auto layers = run_experiment_suite(run, "layer_sweep");
    CHECK(layers.size() == 5);

    CHECK_THROWS_AS(run_experiment_suite(run, "nonsense"), ConfigError);
}

TEST_CASE("report CSV is canonical and stable") {
    ExperimentRow row;
    row.variant = "b_second";
    row.task = "recognition";
    row.metrics.top1 = 12.34567;
    row.metrics.top5 = 99.9;
    row.metrics.reverse_pair_top1 = 50.0;
    row.seconds = 1.23456;
    ExperimentRow row2 = row;
    row2.variant = "a_first";
    const std::string csv = report_to_csv({row, row2});
    CHECK(csv.find("variant,cross,intra,branch,multilevel,task,metric,value,seconds\n") == 0);
    CHECK(csv.find("a_first") < csv.find("b_second")); // sorted by variant
    CHECK(csv.find("12.3457") != std::string::npos);   // %.4f rounding
    CHECK(report_to_csv({row, row2}) == csv);
    CHECK_THROWS_AS(report_to_csv({}), ParamError);
}

TEST_CASE("config files and overrides") {
    TempFile f("config.txt");
    {
        std::ofstream os(f.path);
        os << "# a comment\n";
        os << "task = retrieval\n";
        os << "epochs = 3\n";
        os << "lr_branch = 0.5  # trailing comment\n";
        os << "variant = conv3d\n";
        os << "use_multilevel = false\n";
        os << "\n";
    }
    RunConfig run;
    apply_config_file(run, f.path);
    CHECK(run.task == "retrieval");
    CHECK(run.epochs == 3);
    CHECK(run.lr_branch == 0.5);
    CHECK(run.model.cross_frame_variant == CrossFrameVariant::conv3d);
    CHECK_FALSE(run.model.use_multilevel);

    apply_config_entry(run, "stan_layers", "2");
    CHECK(run.model.K == 2);
    CHECK_THROWS_AS(apply_config_entry(run, "bogus_key", "1"), ConfigError);
    CHECK_THROWS_AS(apply_config_entry(run, "use_dsl", "maybe"), ConfigError);

    {
        std::ofstream os(f.path);
        os << "no equals sign here\n";
    }
    CHECK_THROWS_AS(apply_config_file(run, f.path), ConfigError);
}

TEST_CASE("STAN_SEED environment variable overrides the configured seed") {
    RunConfig run;
    run.seed = 5;
    setenv("STAN_SEED", "123", 1);
    apply_env_seed(run);
    CHECK(run.seed == 123);
    unsetenv("STAN_SEED");
    apply_env_seed(run);
    CHECK(run.seed == 123); // absent variable changes nothing
}

TEST_CASE("run config validation") {
    RunConfig run = tiny_run();
    run.task = "nonsense";
    CHECK_THROWS_AS(run.validate(), ConfigError);
    run = tiny_run();
    run.epochs = 0;
    CHECK_THROWS_AS(run.validate(), ConfigError);
    run = tiny_run();
    run.schedule = "linear";
    CHECK_THROWS_AS(run.validate(), ConfigError);
    run = tiny_run();
    run.model.heads = 3;
    CHECK_THROWS_AS(run.validate(), ConfigError);
}
