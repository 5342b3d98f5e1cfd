// Acceptance gate: one pass/fail line per criterion, non-zero exit on any
// failure. Heavier training-based criteria share tuned desk-scale run
// settings; see each criterion's helper for the exact protocol.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "stan/gradcheck.hpp"
#include "stan/harness.hpp"
#include "stan/weights_io.hpp"

using namespace stan;

namespace {

int g_failures = 0;

void report(int id, const char* what, bool ok, const std::string& detail = "") {
    std::printf("%s criterion %2d: %s%s%s\n", ok ? "PASS" : "FAIL", id, what,
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. Gradient suite: every differentiable op plus one full branch layer per
//    cross-frame variant, rel. err <= 1e-4 at eps 1e-5, under 60 s.
// ---------------------------------------------------------------------------
bool gradient_suite(std::string& detail) {
    const double t0 = now_seconds();
    double worst = 0.0;
    std::string worst_name = "none";
    bool ok = true;
    auto run = [&](const std::string& name, const std::function<Tensor()>& fn,
                   const std::vector<std::pair<std::string, Tensor>>& params) {
        GradCheckReport rep = grad_check(fn, params, 1e-5, 1e-4);
        if (!rep.passed) ok = false;
        if (rep.max_rel_err > worst) {
            worst = rep.max_rel_err;
            worst_name = name;
        }
    };

    Rng rng(1);
    {
        Tensor a = Tensor::randn({2, 3}, rng).set_requires_grad(true);
        Tensor b = Tensor::randn({3}, rng).set_requires_grad(true);
        run("add", [&] { return sum(add(a, b)); }, {{"a", a}, {"b", b}});
        run("sub", [&] { return sum(mul(sub(a, b), sub(a, b))); }, {{"a", a}, {"b", b}});
        run("mul", [&] { return sum(mul(a, b)); }, {{"a", a}, {"b", b}});
        run("scale", [&] { return sum(scale(mul(a, a), 1.7)); }, {{"a", a}});
        Tensor s = Tensor::scalar(0.8).set_requires_grad(true);
        run("scalar broadcast", [&] { return sum(mul(a, s)); }, {{"a", a}, {"s", s}});
    }
    {
        Tensor a = Tensor::randn({2, 3, 4}, rng).set_requires_grad(true);
        Tensor b = Tensor::randn({4, 2}, rng).set_requires_grad(true);
        Tensor c = Tensor::randn({2, 3, 4}, rng).set_requires_grad(true);
        run("matmul", [&] { return sum(matmul(a, b)); }, {{"a", a}, {"b", b}});
        run("matmul batched", [&] { return sum(matmul(a, permute(c, {0, 2, 1}))); },
            {{"a", a}, {"c", c}});
        run("permute", [&] { return sum(mul(permute(a, {2, 0, 1}), permute(a, {2, 0, 1}))); },
            {{"a", a}});
        run("reshape", [&] { return sum(mul(reshape(a, {6, 4}), reshape(a, {6, 4}))); }, {{"a", a}});
        run("slice", [&] { return sum(mul(slice(a, 1, 1, 2), slice(a, 1, 1, 2))); }, {{"a", a}});
        run("concat_axis0", [&] { return sum(mul(concat_axis0(a, c), concat_axis0(a, c))); },
            {{"a", a}, {"c", c}});
        run("softmax", [&] { return sum(mul(softmax(a, 2), softmax(a, 2))); }, {{"a", a}});
        run("gelu", [&] { return sum(gelu(a)); }, {{"a", a}});
        run("sum", [&] { return sum(a); }, {{"a", a}});
        run("mean_axis0", [&] { return sum(mul(mean_axis0(a), mean_axis0(a))); }, {{"a", a}});
        run("temporal_shift", [&] { return sum(mul(temporal_shift(a, 1), temporal_shift(a, -1))); },
            {{"a", a}});
    }
    {
        Tensor x = Tensor::randn({2, 5}, rng).set_requires_grad(true);
        Tensor gamma = Tensor::randn({5}, rng).set_requires_grad(true);
        Tensor beta = Tensor::randn({5}, rng).set_requires_grad(true);
        run("layer_norm", [&] { return sum(mul(layer_norm(x, gamma, beta), x)); },
            {{"x", x}, {"gamma", gamma}, {"beta", beta}});
        run("row_normalize", [&] { return sum(mul(row_normalize(x), x)); }, {{"x", x}});
        run("cross_entropy", [&] { return cross_entropy_logits(x, {1, 3}); }, {{"x", x}});
        Tensor table = Tensor::randn({6, 4}, rng).set_requires_grad(true);
        run("rows_lookup", [&] { return sum(mul(rows_lookup(table, {0, 2, 2}), rows_lookup(table, {0, 2, 2}))); },
            {{"table", table}});
        Tensor r1 = Tensor::randn({4}, rng).set_requires_grad(true);
        Tensor r2 = Tensor::randn({4}, rng).set_requires_grad(true);
        run("stack_rows", [&] { return sum(mul(stack_rows({r1, r2}), stack_rows({r2, r1}))); },
            {{"r1", r1}, {"r2", r2}});
        run("stack0", [&] { return sum(mul(stack0({x, x}), stack0({x, x}))); }, {{"x", x}});
        Tensor w = Tensor::randn({5, 3}, rng).set_requires_grad(true);
        Tensor bias = Tensor::randn({3}, rng).set_requires_grad(true);
        run("affine", [&] { return sum(affine(x, w, bias)); }, {{"x", x}, {"w", w}, {"bias", bias}});
    }
    {
        // Dropout with p > 0: the mask is a deterministic function of the rng
        // seed, so rebuilding the generator per call keeps fn deterministic.
        Tensor x = Tensor::randn({3, 4}, rng).set_requires_grad(true);
        run("dropout", [&] {
            Rng drng(77);
            return sum(mul(dropout(x, 0.4, true, drng), x));
        },
            {{"x", x}});
    }
    {
        Tensor cls = Tensor::randn({2, 4}, rng).set_requires_grad(true);
        Tensor patches = Tensor::randn({2, 2, 3, 4}, rng).set_requires_grad(true);
        run("prepend_cls", [&] { return sum(mul(prepend_cls(cls, patches), prepend_cls(cls, patches))); },
            {{"cls", cls}, {"patches", patches}});
        Tensor pt = Tensor::randn({2, 4}, rng).set_requires_grad(true);
        Tensor ps = Tensor::randn({3, 4}, rng).set_requires_grad(true);
        run("add_positions", [&] { return sum(mul(add_positions(patches, pt, ps), patches)); },
            {{"patches", patches}, {"pt", pt}, {"ps", ps}});
    }

    // One full branch layer per cross-frame variant.
    for (int variant = 0; variant < 2; ++variant) {
        ModelConfig cfg;
        cfg.T = 2;
        cfg.grid_h = 2;
        cfg.grid_w = 2;
        cfg.patch_size = 2;
        cfg.D = 8;
        cfg.heads = 2;
        cfg.depth = 2;
        cfg.K = 2;
        cfg.level_range_end = 2;
        cfg.zero_init_branch = false;
        cfg.cross_frame_variant =
            variant == 0 ? CrossFrameVariant::self_attention : CrossFrameVariant::conv3d;
        Rng prng(50 + variant);
        StanParams params = StanParams::init(cfg, prng);
        ParamList ps = params.params();
        set_requires_grad(ps, true);
        std::vector<LevelBatch> levels;
        for (int k = 0; k < cfg.K; ++k)
            levels.push_back({k + 1, Tensor::randn({1, cfg.T, cfg.L() + 1, cfg.D}, prng)});
        run(std::string("stan layer ") + to_string(cfg.cross_frame_variant),
            [&] {
                Rng drop(0);
                StanSequence out = stan_forward(levels, params, cfg, false, drop);
                return add(sum(mul(out.patches, out.patches)),
                           sum(mul(out.video_cls, out.video_cls)));
            },
            {ps.begin(), ps.end()});
    }

    const double elapsed = now_seconds() - t0;
    detail = "max rel err " + fmt(worst) + " (" + worst_name + "), " + fmt(elapsed) + " s";
    return ok && elapsed < 60.0;
}

// ---------------------------------------------------------------------------
// 2. Identity at init for 20 random configs, both variants.
// ---------------------------------------------------------------------------
bool identity_at_init(std::string& detail) {
    Rng shapes(99);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        ModelConfig cfg;
        cfg.T = 2 + shapes.uniform_int(4);
        cfg.grid_h = 1 + shapes.uniform_int(3);
        cfg.grid_w = 1 + shapes.uniform_int(3);
        cfg.patch_size = 2;
        cfg.D = 8 * (1 + shapes.uniform_int(3));
        cfg.heads = (cfg.D % 16 == 0 && shapes.uniform_int(2)) ? 4 : 2;
        cfg.depth = 2 + shapes.uniform_int(2);
        cfg.K = 1 + shapes.uniform_int(2);
        cfg.level_range_end = cfg.depth;
        cfg.level_interval = 1;
        cfg.zero_init_branch = true;
        cfg.cross_frame_variant =
            trial % 2 == 0 ? CrossFrameVariant::self_attention : CrossFrameVariant::conv3d;
        cfg.validate();

        VideoTextModel model = VideoTextModel::init(cfg, 1000 + trial);
        Rng frng(trial);
        Tensor frames = Tensor::randn({cfg.T, 1, cfg.frame_px_h(), cfg.frame_px_w()}, frng);
        Rng d1(0), d2(0);
        Tensor branch_emb = model.video_embedding(frames, false, d1);
        VideoTextModel baseline = model;
        baseline.cfg.use_cross_frame = false;
        baseline.cfg.use_intra_frame = false;
        Tensor base_emb = baseline.video_embedding(frames, false, d2);
        for (int i = 0; i < cfg.D; ++i)
            worst = std::max(worst, std::abs(branch_emb.values()[i] - base_emb.values()[i]));
    }
    detail = "max |branch - baseline| = " + fmt(worst * 1e12) + "e-12";
    return worst < 1e-12;
}

// ---------------------------------------------------------------------------
// 3. Shape invariant: branch layer output shape equals its input shape for
//    randomized configs, both variants.
// ---------------------------------------------------------------------------
bool shape_invariant(std::string& detail) {
    Rng shapes(7);
    int checked = 0;
    for (int trial = 0; trial < 12; ++trial) {
        ModelConfig cfg;
        cfg.T = 2 + shapes.uniform_int(4);
        cfg.grid_h = 1 + shapes.uniform_int(3);
        cfg.grid_w = 1 + shapes.uniform_int(3);
        cfg.patch_size = 2;
        cfg.D = 8 * (1 + shapes.uniform_int(3));
        cfg.heads = 2;
        cfg.depth = 4;
        cfg.K = 1 + shapes.uniform_int(4);
        cfg.level_range_end = 4;
        cfg.level_interval = 1;
        cfg.zero_init_branch = false;
        cfg.cross_frame_variant =
            trial % 2 == 0 ? CrossFrameVariant::self_attention : CrossFrameVariant::conv3d;
        cfg.validate();

        Rng rng(300 + trial);
        StanParams params = StanParams::init(cfg, rng);
        Rng drop(0);
        StanSequence seq = build_first_input(
            {1, Tensor::randn({1, cfg.T, cfg.L() + 1, cfg.D}, rng)}, params.pos, 0.0, false, drop);
        for (int k = 0; k < cfg.K; ++k) {
            const Shape cls_shape = seq.video_cls.shape();
            const Shape patch_shape = seq.patches.shape();
            seq = stan_layer_forward(seq, params.layers[k], cfg);
            if (seq.video_cls.shape() != cls_shape || seq.patches.shape() != patch_shape) {
                detail = "shape changed at trial " + std::to_string(trial);
                return false;
            }
            ++checked;
        }
    }
    detail = std::to_string(checked) + " layer applications";
    return true;
}

// ---------------------------------------------------------------------------
// 4. Frozen non-interference: backbone parameters and activations bitwise
//    identical with and without the branch, before and after training.
// ---------------------------------------------------------------------------
bool frozen_noninterference(std::string& detail) {
    RunConfig run;
    run.model.T = 4;
    run.model.grid_h = 2;
    run.model.grid_w = 2;
    run.model.patch_size = 2;
    run.model.D = 16;
    run.model.depth = 2;
    run.model.heads = 2;
    run.model.K = 2;
    run.model.level_range_end = 2;
    run.epochs = 2;
    run.batch_size = 8;
    run.n_per_class = 2;
    run.lr_branch = 1e-2;

    Dataset ds = generate_dataset(0, run.n_per_class, run.model);
    Tensor frames = clip_frames_tensor(ds, 0);

    VideoTextModel with_branch = make_model(run);
    RunConfig base_run = run;
    base_run.model.use_cross_frame = false;
    base_run.model.use_intra_frame = false;
    VideoTextModel without = make_model(base_run);

    auto backbone_values = [&](const VideoTextModel& m) {
        return backbone_forward_multilevel(frames, m.backbone, run.model).final_tokens.values();
    };
    const std::vector<double> acts_before = backbone_values(with_branch);
    if (acts_before != backbone_values(without)) {
        detail = "activations differ between attached and detached branch";
        return false;
    }
    std::vector<std::vector<double>> params_before;
    for (const auto& [name, p] : with_branch.backbone_params()) params_before.push_back(p.values());

    TrainResult trained = train(run, ds);
    const std::vector<double> acts_after = backbone_values(trained.model);
    if (acts_after != acts_before) {
        detail = "activations changed across training";
        return false;
    }
    size_t i = 0;
    for (const auto& [name, p] : trained.model.backbone_params())
        if (p.values() != params_before[i++]) {
            detail = "parameter changed: " + name;
            return false;
        }
    detail = "bitwise identical";
    return true;
}

// ---------------------------------------------------------------------------
// 5. Order discrimination on the reverse-pair recognition task.
// ---------------------------------------------------------------------------
struct OrderResult {
    double baseline = 0.0, self_attn = 0.0, conv = 0.0, seconds = 0.0;
    TrainResult self_model; // reused by the permutation criterion
};

OrderResult order_discrimination() {
    OrderResult res;
    const double t0 = now_seconds();

    RunConfig run; // default model config, seed 0
    run.n_per_class = 8;
    run.epochs = 80;
    run.batch_size = 32;
    run.lr_branch = 2e-2;

    Dataset ds = generate_dataset(run.seed, run.n_per_class, run.model);

    RunConfig base_run = run;
    base_run.model.use_cross_frame = false;
    base_run.model.use_intra_frame = false;
    base_run.epochs = 30; // the baseline head converges quickly
    TrainResult base = train(base_run, ds);
    res.baseline = evaluate(base.model, ds, "recognition", false).reverse_pair_top1;

    res.self_model = train(run, ds);
    res.self_attn =
        evaluate(res.self_model.model, ds, "recognition", false).reverse_pair_top1;

    RunConfig conv_run = run;
    conv_run.model.cross_frame_variant = CrossFrameVariant::conv3d;
    TrainResult conv = train(conv_run, ds);
    res.conv = evaluate(conv.model, ds, "recognition", false).reverse_pair_top1;

    res.seconds = now_seconds() - t0;
    return res;
}

// ---------------------------------------------------------------------------
// 6. Retrieval direction: full > baseline + 10 and > posterior + 3 on R@1,
//    averaged over three seeds.
// ---------------------------------------------------------------------------
bool retrieval_direction(std::string& detail) {
    double full_sum = 0.0, base_sum = 0.0, post_sum = 0.0;
    for (std::uint64_t seed : {0, 1, 2}) {
        RunConfig run;
        run.task = "retrieval";
        run.seed = seed;
        run.epochs = 40;
        run.batch_size = 32;
        run.lr_branch = 5e-3;
        Dataset ds = generate_retrieval_dataset(seed, run.model);

        auto r1 = [&](bool cross, bool intra, bool branch, bool multilevel) {
            RunConfig rc = run;
            rc.model.use_cross_frame = cross;
            rc.model.use_intra_frame = intra;
            rc.model.use_branch = branch;
            rc.model.use_multilevel = multilevel;
            TrainResult tr = train(rc, ds);
            return evaluate(tr.model, ds, "retrieval", false).r_at.at(1);
        };
        full_sum += r1(true, true, true, true);
        base_sum += r1(false, false, false, false);
        post_sum += r1(true, true, false, false);
    }
    const double full = full_sum / 3.0, base = base_sum / 3.0, post = post_sum / 3.0;
    detail = "R@1 full " + fmt(full) + ", baseline " + fmt(base) + ", posterior " + fmt(post);
    return full >= base + 10.0 && post + 3.0 <= full;
}

// ---------------------------------------------------------------------------
// 7. Ablation table: six rows complete and the full configuration attains the
//    best primary metric on both tasks.
// ---------------------------------------------------------------------------
bool ablation_best(std::string& detail) {
    std::ostringstream os;
    for (const std::string task : {"recognition", "retrieval"}) {
        RunConfig run;
        run.task = task;
        run.n_per_class = 8;
        run.epochs = 80;
        run.batch_size = 32;
        run.lr_branch = task == "recognition" ? 2e-2 : 5e-3;
        std::vector<ExperimentRow> rows = run_experiment_suite(run, "ablation");
        if (rows.size() != 6) {
            detail = "expected 6 rows, got " + std::to_string(rows.size());
            return false;
        }
        double best_other = -1.0, full = -1.0;
        for (const auto& row : rows) {
            const double metric = primary_metric(row);
            if (row.variant == "6_full")
                full = metric;
            else
                best_other = std::max(best_other, metric);
        }
        os << task << " full " << fmt(full) << " vs best other " << fmt(best_other) << "; ";
        if (full < best_other) {
            detail = os.str() + "full configuration is not best";
            return false;
        }
    }
    detail = os.str();
    return true;
}

// ---------------------------------------------------------------------------
// 8. Level sweep: interval 1 >= interval 2 >= interval 3 on the recognition
//    metric, three-seed average.
// ---------------------------------------------------------------------------
bool level_sweep_order(std::string& detail) {
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::uint64_t seed : {0, 1, 2}) {
        RunConfig run;
        run.seed = seed;
        run.model.D = 32; // a narrower branch memorizes the small sweep corpus fast
        run.n_per_class = 2;
        run.epochs = 400;
        run.batch_size = 16;
        run.lr_branch = 1e-2;
        std::vector<ExperimentRow> rows = run_experiment_suite(run, "level_sweep");
        for (const auto& row : rows)
            for (int i = 1; i <= 3; ++i)
                if (row.variant == "interval_" + std::to_string(i)) acc[i] += primary_metric(row);
    }
    detail = "top1 by interval: " + fmt(acc[1] / 3) + " / " + fmt(acc[2] / 3) + " / " +
             fmt(acc[3] / 3);
    return acc[1] >= acc[2] && acc[2] >= acc[3];
}

// ---------------------------------------------------------------------------
// 9. Metric oracles.
// ---------------------------------------------------------------------------
int rank_oracle(const std::vector<double>& scores, int target) {
    int rank = 1;
    for (int j = 0; j < static_cast<int>(scores.size()); ++j) {
        if (j == target) continue;
        if (scores[j] > scores[target] || (scores[j] == scores[target] && j < target)) ++rank;
    }
    return rank;
}

bool metric_oracles(std::string& detail) {
    Rng rng(123);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 12 + rng.uniform_int(9);
        SimilarityMatrix sim;
        sim.values = Tensor::randn({n, n}, rng);
        sim.ground_truth.resize(n);
        for (int i = 0; i < n; ++i) sim.ground_truth[i] = rng.uniform_int(n);
        MetricsReport rep = retrieval_metrics(sim);
        std::vector<int> ranks;
        for (int i = 0; i < n; ++i) {
            std::vector<double> row(sim.values.values().begin() + i * n,
                                    sim.values.values().begin() + (i + 1) * n);
            ranks.push_back(rank_oracle(row, sim.ground_truth[i]));
        }
        for (int K : {1, 5, 10}) {
            int hits = 0;
            for (int r : ranks)
                if (r <= K) ++hits;
            if (rep.r_at.at(K) != 100.0 * hits / n) {
                detail = "R@K mismatch at trial " + std::to_string(trial);
                return false;
            }
        }
        std::sort(ranks.begin(), ranks.end());
        const double mdr = n % 2 == 1 ? ranks[n / 2] : 0.5 * (ranks[n / 2 - 1] + ranks[n / 2]);
        if (rep.median_rank != mdr) {
            detail = "median rank mismatch at trial " + std::to_string(trial);
            return false;
        }

        std::vector<int> labels(n);
        for (int i = 0; i < n; ++i) labels[i] = rng.uniform_int(n);
        for (int k : {1, 5}) {
            int hits = 0;
            for (int i = 0; i < n; ++i) {
                std::vector<double> row(sim.values.values().begin() + i * n,
                                        sim.values.values().begin() + (i + 1) * n);
                if (rank_oracle(row, labels[i]) <= k) ++hits;
            }
            if (topk_accuracy(sim.values, labels, k) != 100.0 * hits / n) {
                detail = "top-k mismatch at trial " + std::to_string(trial);
                return false;
            }
        }
    }
    for (int n : {2, 5, 16}) {
        SimilarityMatrix sim;
        sim.values = Tensor::full({n, n}, 0.5);
        sim.ground_truth.resize(n);
        for (int i = 0; i < n; ++i) sim.ground_truth[i] = i;
        if (std::abs(nce_loss(sim, 0.07).item() - std::log(n)) > 1e-12) {
            detail = "constant-matrix NCE differs from ln N";
            return false;
        }
    }
    detail = "100 random matrices + constant-matrix NCE";
    return true;
}

// ---------------------------------------------------------------------------
// 10. Permutation property.
// ---------------------------------------------------------------------------
bool permutation_property(const TrainResult& trained, std::string& detail) {
    // (a) pos_t zeroed: embedding invariant under frame permutation.
    ModelConfig cfg; // default, self_attention
    VideoTextModel model = VideoTextModel::init(cfg, 5);
    for (auto& v : model.stan.pos.pos_t.mutable_values()) v = 0.0;

    Dataset ds = generate_dataset(3, 1, cfg);
    Tensor frames = clip_frames_tensor(ds, 0);
    // Reverse the frame order.
    const int fsz = cfg.frame_px_h() * cfg.frame_px_w();
    std::vector<double> rev(frames.values().size());
    for (int t = 0; t < cfg.T; ++t)
        std::copy(frames.values().begin() + t * fsz, frames.values().begin() + (t + 1) * fsz,
                  rev.begin() + (cfg.T - 1 - t) * fsz);
    Rng d1(0), d2(0);
    Tensor e1 = model.video_embedding(frames, false, d1);
    Tensor e2 = model.video_embedding(Tensor::from(frames.shape(), rev), false, d2);
    double gap = 0.0;
    for (int i = 0; i < cfg.D; ++i) gap = std::max(gap, std::abs(e1.values()[i] - e2.values()[i]));
    if (gap > 1e-9) {
        detail = "pos_t = 0 but permutation moved the embedding by " + fmt(gap);
        return false;
    }

    // (b) trained pos_t: reverse-pair clips receive distinct embeddings.
    const VideoTextModel& tm = trained.model;
    Dataset tds = generate_dataset(0, 1, tm.cfg);
    double min_l2 = 1e300;
    for (size_t i = 0; i + 1 < tds.clips.size(); ++i) {
        if (!is_reverse_pair_class(static_cast<int>(tds.clips[i].label)) ||
            static_cast<int>(tds.clips[i + 1].label) !=
                reverse_class_of(static_cast<int>(tds.clips[i].label)))
            continue;
        Rng da(0), db(0);
        Tensor ea = tm.video_embedding(clip_frames_tensor(tds, static_cast<int>(i)), false, da);
        Tensor eb = tm.video_embedding(clip_frames_tensor(tds, static_cast<int>(i + 1)), false, db);
        double l2 = 0.0;
        for (int j = 0; j < tm.cfg.D; ++j) {
            const double d = ea.values()[j] - eb.values()[j];
            l2 += d * d;
        }
        min_l2 = std::min(min_l2, std::sqrt(l2));
    }
    detail = "zero-pos gap " + fmt(gap * 1e9) + "e-9, min trained reverse-pair L2 " + fmt(min_l2);
    return min_l2 > 1e-3;
}

// ---------------------------------------------------------------------------
// 11. Conv locality: unit impulse at frame t propagates exactly to t-1..t+1.
// ---------------------------------------------------------------------------
bool conv_locality(std::string& detail) {
    ModelConfig cfg;
    cfg.cross_frame_variant = CrossFrameVariant::conv3d;
    cfg.zero_init_branch = false;
    Rng rng(9);
    ConvModuleParams p = ConvModuleParams::init(cfg.D, rng, false);

    for (int t0 : {0, 3, cfg.T - 1}) {
        StanSequence base;
        base.video_cls = Tensor::zeros({1, cfg.D});
        base.patches = Tensor::randn({1, cfg.T, cfg.L(), cfg.D}, rng);
        StanSequence bumped;
        bumped.video_cls = base.video_cls;
        std::vector<double> vals = base.patches.values();
        const int fsz = cfg.L() * cfg.D;
        vals[t0 * fsz + 11] += 1.0;
        bumped.patches = Tensor::from(base.patches.shape(), vals);
        StanSequence ob = cross_frame_conv(base, p, cfg);
        StanSequence oi = cross_frame_conv(bumped, p, cfg);
        for (int t = 0; t < cfg.T; ++t) {
            double diff = 0.0;
            for (int i = 0; i < fsz; ++i)
                diff +=
                    std::abs(oi.patches.values()[t * fsz + i] - ob.patches.values()[t * fsz + i]);
            const bool inside = t >= t0 - 1 && t <= t0 + 1;
            if (inside && diff == 0.0) {
                detail = "no response at frame " + std::to_string(t);
                return false;
            }
            if (!inside && diff != 0.0) {
                detail = "leakage to frame " + std::to_string(t) + " (impulse at " +
                         std::to_string(t0) + ")";
                return false;
            }
        }
    }
    detail = "exact zeros outside the temporal kernel";
    return true;
}

// ---------------------------------------------------------------------------
// 12. CLI determinism: identical artifacts across repeated runs.
// ---------------------------------------------------------------------------
std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

bool run_cli(const std::string& args) {
    const std::string cmd = std::string(STAN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str()) == 0;
}

bool cli_determinism(std::string& detail) {
    const std::string dir = "/tmp/stan_acceptance";
    if (std::system(("rm -rf " + dir + " && mkdir -p " + dir).c_str()) != 0) {
        detail = "could not prepare scratch directory";
        return false;
    }
    const std::string small =
        "--frames 4 --grid-h 2 --grid-w 2 --patch-size 2 --dim 16 --depth 2 --heads 2 "
        "--stan-layers 2 --level-range-end 2 --n-per-class 2 --epochs 2 --batch-size 8";

    for (const char* tag : {"a", "b"}) {
        const std::string t = std::string(dir) + "/" + tag;
        if (!run_cli("gen-data " + small + " --out " + t + "_ds.bin") ||
            !run_cli("train " + small + " --dataset " + dir + "/a_ds.bin --weights-out " + t +
                     "_w.bin --trace-out " + t + "_trace.txt") ||
            !run_cli("eval " + small + " --dataset " + dir + "/a_ds.bin --weights " + dir +
                     "/a_w.bin --report " + t + "_report.csv")) {
            detail = "CLI invocation failed";
            return false;
        }
    }
    for (const char* kind : {"_ds.bin", "_w.bin", "_trace.txt", "_report.csv"}) {
        if (slurp(dir + "/a" + kind) != slurp(dir + "/b" + kind) ||
            slurp(dir + "/a" + kind).empty()) {
            detail = std::string("artifact differs or is empty: ") + kind;
            return false;
        }
    }
    detail = "dataset, weights, trace and report bitwise identical";
    return true;
}

} // namespace

int main() {
    std::string detail;

    bool ok = gradient_suite(detail);
    report(1, "gradient suite (all ops + branch layers, tol 1e-4)", ok, detail);

    ok = identity_at_init(detail);
    report(2, "zero-init branch equals mean-pool baseline (20 configs)", ok, detail);

    ok = shape_invariant(detail);
    report(3, "branch layers preserve sequence shape (randomized)", ok, detail);

    ok = frozen_noninterference(detail);
    report(4, "frozen backbone non-interference", ok, detail);

    OrderResult order = order_discrimination();
    ok = order.baseline <= 55.0 && order.self_attn >= 90.0 && order.conv >= 85.0 &&
         order.seconds <= 600.0;
    report(5, "reverse-pair order discrimination", ok,
           "baseline " + fmt(order.baseline) + "%, self-attention " + fmt(order.self_attn) +
               "%, conv " + fmt(order.conv) + "%, " + fmt(order.seconds) + " s");

    ok = retrieval_direction(detail);
    report(6, "retrieval gains over baseline and posterior (3 seeds)", ok, detail);

    ok = ablation_best(detail);
    report(7, "ablation suite: full configuration is best", ok, detail);

    ok = level_sweep_order(detail);
    report(8, "level sweep: interval 1 >= 2 >= 3 (3 seeds)", ok, detail);

    ok = metric_oracles(detail);
    report(9, "metric oracles (retrieval, top-k, NCE)", ok, detail);

    ok = permutation_property(order.self_model, detail);
    report(10, "frame-permutation invariance / trained order sensitivity", ok, detail);

    ok = conv_locality(detail);
    report(11, "conv cross-frame temporal locality", ok, detail);

    ok = cli_determinism(detail);
    report(12, "CLI artifact determinism", ok, detail);

    if (g_failures) std::printf("%d criterion(s) FAILED\n", g_failures);
    else std::printf("all criteria passed\n");
    return g_failures == 0 ? 0 : 1;
}
