#include "stan/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace stan {

void RunConfig::validate() const {
    model.validate();
    if (task != "recognition" && task != "retrieval")
        throw ConfigError("task must be recognition or retrieval, got " + task);
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (n_per_class < 1) throw ConfigError("n_per_class must be >= 1");
    if (lr_branch <= 0.0) throw ConfigError("lr_branch must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
    if (schedule != "cosine") throw ConfigError("unknown schedule: " + schedule);
}

std::vector<BackboneOutput> precompute_features(const VideoTextModel& model, const Dataset& ds) {
    std::vector<BackboneOutput> out;
    out.reserve(ds.clips.size());
    for (size_t i = 0; i < ds.clips.size(); ++i) {
        BackboneOutput bo = backbone_forward_multilevel(clip_frames_tensor(ds, static_cast<int>(i)),
                                                        model.backbone, model.cfg);
        bo.final_tokens = bo.final_tokens.detach();
        out.push_back(std::move(bo));
    }
    return out;
}

static void check_dataset(const RunConfig& run, const Dataset& ds) {
    if (ds.clips.empty()) throw ConfigError("dataset is empty");
    if (ds.T != run.model.T || ds.H != run.model.frame_px_h() || ds.W != run.model.frame_px_w())
        throw ConfigError("dataset geometry (T=" + std::to_string(ds.T) + ", " +
                          std::to_string(ds.H) + "x" + std::to_string(ds.W) +
                          ") does not match model config");
}

static std::vector<std::vector<int>> caption_ids(const Dataset& ds) {
    std::vector<std::vector<int>> out;
    out.reserve(ds.clips.size());
    for (const auto& clip : ds.clips)
        out.emplace_back(clip.caption.begin(), clip.caption.end());
    return out;
}

VideoTextModel make_model(const RunConfig& run) {
    return VideoTextModel::init(run.model, Rng(run.seed).split(11).seed());
}

TrainResult train(const RunConfig& run, const Dataset& ds) {
    run.validate();
    check_dataset(run, ds);
    Rng root(run.seed);
    TrainResult result{make_model(run), {}};
    VideoTextModel& model = result.model;

    const auto features = precompute_features(model, ds);
    const auto captions = caption_ids(ds);
    std::vector<int> labels;
    for (const auto& clip : ds.clips) labels.push_back(static_cast<int>(clip.label));

    ParamList params = model.trainable_params();
    const ParamList backbone_ps = model.backbone_params();
    std::vector<std::vector<double>> backbone_snapshot;
    for (const auto& [name, p] : backbone_ps) backbone_snapshot.push_back(p.values());

    AdamState adam;
    Rng shuffle_rng = root.split(12);
    Rng dropout_rng = root.split(13);

    const int n = static_cast<int>(ds.clips.size());
    const int steps_per_epoch = (n + run.batch_size - 1) / run.batch_size;
    const long total_steps = static_cast<long>(run.epochs) * steps_per_epoch;

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    long step = 0;
    for (int epoch = 0; epoch < run.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (int b = 0; b < steps_per_epoch; ++b) {
            const int lo = b * run.batch_size;
            const int hi = std::min(n, lo + run.batch_size);
            if (run.task == "retrieval" && hi - lo < 2) {
                ++step;
                continue; // a contrastive batch needs at least one negative
            }
            std::vector<const BackboneOutput*> batch_features;
            std::vector<int> batch_labels;
            std::vector<Tensor> txts;
            for (int i = lo; i < hi; ++i) {
                const int idx = order[i];
                batch_features.push_back(&features[idx]);
                if (run.task == "recognition")
                    batch_labels.push_back(labels[idx]);
                else
                    txts.push_back(model.text_embedding(captions[idx]));
            }
            Tensor vids = model.video_embeddings_batch(batch_features, true, dropout_rng);
            Tensor loss;
            if (run.task == "recognition") {
                Tensor logits = affine(vids, model.head_w, model.head_b);
                loss = cross_entropy(logits, batch_labels);
            } else {
                SimilarityMatrix sim = cosine_sim_matrix(vids, stack_rows(txts));
                loss = nce_loss(sim, run.model.nce_temperature);
            }
            zero_grads(params);
            loss.backward();
            const double lr = cosine_lr(run.lr_branch, step, total_steps);
            adamw_step(params, adam, lr, 0.9, 0.999, 1e-8, run.weight_decay);
            result.loss_trace.push_back(loss.item());
            ++step;
        }
        for (size_t i = 0; i < backbone_ps.size(); ++i)
            if (backbone_ps[i].second.values() != backbone_snapshot[i])
                throw std::runtime_error("frozen backbone parameter changed: " +
                                         backbone_ps[i].first);
    }
    return result;
}

MetricsReport evaluate(const VideoTextModel& model, const Dataset& ds, const std::string& task,
                       bool use_dsl) {
    if (task == "recognition" && use_dsl)
        throw UsageError("use_dsl applies only to the retrieval task");
    NoGradGuard no_grad; // inference only: skip graph recording entirely
    Rng eval_rng(0);     // dropout is off outside training; never consumed
    const auto features = precompute_features(model, ds);
    std::vector<const BackboneOutput*> all;
    for (const auto& f : features) all.push_back(&f);
    Tensor video_embs = model.video_embeddings_batch(all, false, eval_rng);

    MetricsReport report;
    if (task == "recognition") {
        std::vector<int> labels;
        for (const auto& clip : ds.clips) labels.push_back(static_cast<int>(clip.label));
        Tensor logits = affine(video_embs, model.head_w, model.head_b);
        report.top1 = topk_accuracy(logits, labels, 1);
        report.top5 = topk_accuracy(logits, labels, std::min(5, model.cfg.num_classes));
        std::vector<Tensor> rev_rows;
        std::vector<int> rev_labels;
        for (size_t i = 0; i < ds.clips.size(); ++i)
            if (is_reverse_pair_class(static_cast<int>(ds.clips[i].label))) {
                rev_rows.push_back(reshape(slice(logits, 0, static_cast<int>(i), 1),
                                           {model.cfg.num_classes}));
                rev_labels.push_back(labels[i]);
            }
        if (!rev_rows.empty())
            report.reverse_pair_top1 = topk_accuracy(stack_rows(rev_rows), rev_labels, 1);
        return report;
    }

    std::vector<Tensor> txts;
    for (const auto& clip : ds.clips)
        txts.push_back(model.text_embedding({clip.caption.begin(), clip.caption.end()}));
    SimilarityMatrix sim = cosine_sim_matrix(video_embs, stack_rows(txts));
    auto [pos, margin] = alignment_diagnostics(sim);
    report.avg_pos_sim = pos;
    report.avg_margin = margin;

    SimilarityMatrix t2v;
    t2v.values = permute(sim.values, {1, 0}).detach();
    t2v.ground_truth = sim.ground_truth;
    SimilarityMatrix v2t = sim;
    if (use_dsl) {
        v2t = dsl_transform(v2t);
        t2v = dsl_transform(t2v);
    }
    MetricsReport mt = retrieval_metrics(t2v);
    MetricsReport mv = retrieval_metrics(v2t);
    report.r_at = mt.r_at;
    report.median_rank = mt.median_rank;
    report.r_at_v2t = mv.r_at;
    report.median_rank_v2t = mv.median_rank;
    return report;
}

double primary_metric(const ExperimentRow& row) {
    return row.task == "retrieval" ? row.metrics.r_at.at(1) : row.metrics.top1;
}

static ExperimentRow run_row(const RunConfig& rc, const Dataset& ds, const std::string& label) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult tr = train(rc, ds);
    MetricsReport metrics = evaluate(tr.model, ds, rc.task, rc.use_dsl);
    const auto t1 = std::chrono::steady_clock::now();
    ExperimentRow row;
    row.variant = label;
    row.cross = rc.model.use_cross_frame;
    row.intra = rc.model.use_intra_frame;
    row.branch = rc.model.use_branch;
    row.multilevel = rc.model.use_multilevel;
    row.task = rc.task;
    row.metrics = metrics;
    row.seconds = std::chrono::duration<double>(t1 - t0).count();
    return row;
}

std::vector<ExperimentRow> run_experiment_suite(const RunConfig& base, const std::string& suite) {
    base.validate();
    std::vector<ExperimentRow> rows;
    const Dataset ds = base.task == "retrieval"
                           ? generate_retrieval_dataset(base.seed, base.model)
                           : generate_dataset(base.seed, base.n_per_class, base.model);

    auto with_switches = [&](bool cross, bool intra, bool branch, bool multilevel) {
        RunConfig rc = base;
        rc.model.use_cross_frame = cross;
        rc.model.use_intra_frame = intra;
        rc.model.use_branch = branch;
        rc.model.use_multilevel = multilevel;
        return rc;
    };

    if (suite == "ablation") {
        rows.push_back(run_row(with_switches(false, false, false, false), ds, "1_baseline"));
        rows.push_back(run_row(with_switches(true, true, false, false), ds, "2_posterior"));
        rows.push_back(run_row(with_switches(true, true, true, false), ds, "3_branch"));
        rows.push_back(run_row(with_switches(false, true, true, true), ds, "4_intra_multilevel"));
        rows.push_back(run_row(with_switches(true, false, true, true), ds, "5_cross_multilevel"));
        rows.push_back(run_row(with_switches(true, true, true, true), ds, "6_full"));
    } else if (suite == "level_sweep") {
        // Deep enough for interval 3 with K layers; last level aligned to the top.
        RunConfig deep = base;
        deep.model.depth = std::max(base.model.depth, 1 + (base.model.K - 1) * 3);
        for (int interval : {1, 2, 3}) {
            RunConfig rc = deep;
            rc.model.level_interval = interval;
            rc.model.level_range_end = rc.model.depth;
            rows.push_back(run_row(rc, ds, "interval_" + std::to_string(interval)));
        }
        for (int third = 1; third <= 3; ++third) {
            RunConfig rc = deep;
            rc.model.level_interval = 1;
            rc.model.level_range_end = std::max(rc.model.K, rc.model.depth * third / 3);
            rows.push_back(run_row(rc, ds, "range_end_" + std::to_string(rc.model.level_range_end)));
        }
    } else if (suite == "layer_sweep") {
        for (int k : {1, 2, 4, 6, 8}) {
            RunConfig rc = base;
            rc.model.K = std::min(k, rc.model.depth);
            rc.model.level_interval = 1;
            rc.model.level_range_end = rc.model.depth;
            rows.push_back(run_row(rc, ds, "layers_" + std::to_string(rc.model.K)));
        }
    } else {
        throw ConfigError("unknown suite: " + suite);
    }
    return rows;
}

static std::string fmt4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string report_to_csv(std::vector<ExperimentRow> rows) {
    if (rows.empty()) throw ParamError("report_to_csv: no rows");
    std::stable_sort(rows.begin(), rows.end(),
                     [](const ExperimentRow& a, const ExperimentRow& b) { return a.variant < b.variant; });
    std::string out = "variant,cross,intra,branch,multilevel,task,metric,value,seconds\n";
    for (const auto& row : rows) {
        std::vector<std::pair<std::string, double>> metrics;
        if (row.task == "retrieval") {
            metrics = {{"r1", row.metrics.r_at.at(1)},
                       {"r5", row.metrics.r_at.at(5)},
                       {"r10", row.metrics.r_at.at(10)},
                       {"mdr", row.metrics.median_rank},
                       {"r1_v2t", row.metrics.r_at_v2t.at(1)},
                       {"r5_v2t", row.metrics.r_at_v2t.at(5)},
                       {"r10_v2t", row.metrics.r_at_v2t.at(10)},
                       {"mdr_v2t", row.metrics.median_rank_v2t},
                       {"pos_sim", row.metrics.avg_pos_sim},
                       {"margin", row.metrics.avg_margin}};
        } else {
            metrics = {{"top1", row.metrics.top1},
                       {"top5", row.metrics.top5},
                       {"rev_top1", row.metrics.reverse_pair_top1}};
        }
        for (const auto& [name, value] : metrics) {
            out += row.variant + ',' + (row.cross ? "1" : "0") + ',' + (row.intra ? "1" : "0") + ',' +
                   (row.branch ? "1" : "0") + ',' + (row.multilevel ? "1" : "0") + ',' + row.task +
                   ',' + name + ',' + fmt4(value) + ',' + fmt4(row.seconds) + '\n';
        }
    }
    return out;
}

void emit_report(const std::vector<ExperimentRow>& rows, const std::string& path) {
    const std::string csv = report_to_csv(rows);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << csv;
    if (!os) throw IoError("write failed for " + path);
}

// ---- config file / environment ----

static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

void apply_config_entry(RunConfig& run, const std::string& key, const std::string& value) {
    auto as_int = [&] { return std::stoi(value); };
    auto as_double = [&] { return std::stod(value); };
    auto as_bool = [&] {
        if (value == "true" || value == "1") return true;
        if (value == "false" || value == "0") return false;
        throw ConfigError("boolean expected for " + key + ", got " + value);
    };
    if (key == "task") run.task = value;
    else if (key == "epochs") run.epochs = as_int();
    else if (key == "batch_size") run.batch_size = as_int();
    else if (key == "n_per_class") run.n_per_class = as_int();
    else if (key == "lr_backbone") run.lr_backbone = as_double();
    else if (key == "lr_branch") run.lr_branch = as_double();
    else if (key == "weight_decay") run.weight_decay = as_double();
    else if (key == "schedule") run.schedule = value;
    else if (key == "seed") run.seed = std::stoull(value);
    else if (key == "dataset") run.dataset_path = value;
    else if (key == "report") run.report_path = value;
    else if (key == "use_dsl") run.use_dsl = as_bool();
    else if (key == "frames") run.model.T = as_int();
    else if (key == "grid_h") run.model.grid_h = as_int();
    else if (key == "grid_w") run.model.grid_w = as_int();
    else if (key == "patch_size") run.model.patch_size = as_int();
    else if (key == "dim") run.model.D = as_int();
    else if (key == "depth") run.model.depth = as_int();
    else if (key == "heads") run.model.heads = as_int();
    else if (key == "stan_layers") run.model.K = as_int();
    else if (key == "level_interval") run.model.level_interval = as_int();
    else if (key == "level_range_end") run.model.level_range_end = as_int();
    else if (key == "variant") run.model.cross_frame_variant = cross_frame_variant_from_string(value);
    else if (key == "use_cross_frame") run.model.use_cross_frame = as_bool();
    else if (key == "use_intra_frame") run.model.use_intra_frame = as_bool();
    else if (key == "use_branch") run.model.use_branch = as_bool();
    else if (key == "use_multilevel") run.model.use_multilevel = as_bool();
    else if (key == "dropout") run.model.dropout_p = as_double();
    else if (key == "zero_init_branch") run.model.zero_init_branch = as_bool();
    else if (key == "text_vocab") run.model.text_vocab = as_int();
    else if (key == "text_len") run.model.text_len = as_int();
    else if (key == "text_depth") run.model.text_depth = as_int();
    else if (key == "nce_temperature") run.model.nce_temperature = as_double();
    else if (key == "num_classes") run.model.num_classes = as_int();
    else throw ConfigError("unknown config key: " + key);
}

void apply_config_file(RunConfig& run, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        apply_config_entry(run, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void apply_env_seed(RunConfig& run) {
    if (const char* env = std::getenv("STAN_SEED")) run.seed = std::stoull(env);
}

} // namespace stan
