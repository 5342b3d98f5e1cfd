// Command-line front end: gen-data, train, eval, suite, report.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "stan/harness.hpp"
#include "stan/weights_io.hpp"

namespace {

struct CliRun {
    stan::RunConfig run;
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
};

// Every RunConfig/ModelConfig field is available as a --kebab-case flag;
// flags override config-file values, STAN_SEED overrides both.
void add_run_options(CLI::App* cmd, CliRun& ctx) {
    cmd->add_option("--config", ctx.config_path, "key = value config file");
    static const char* keys[] = {
        "task", "epochs", "batch_size", "n_per_class", "lr_backbone", "lr_branch",
        "weight_decay", "schedule", "seed", "dataset", "report", "use_dsl", "frames",
        "grid_h", "grid_w", "patch_size", "dim", "depth", "heads", "stan_layers",
        "level_interval", "level_range_end", "variant", "use_cross_frame", "use_intra_frame",
        "use_branch", "use_multilevel", "dropout", "zero_init_branch", "text_vocab",
        "text_len", "text_depth", "nce_temperature", "num_classes"};
    for (const char* key : keys) {
        std::string flag = "--" + std::string(key);
        for (auto& c : flag)
            if (c == '_') c = '-';
        cmd->add_option_function<std::string>(
            flag, [&ctx, key](const std::string& v) { ctx.overrides.emplace_back(key, v); });
    }
}

void finalize_run(CliRun& ctx) {
    if (!ctx.config_path.empty()) stan::apply_config_file(ctx.run, ctx.config_path);
    for (const auto& [key, value] : ctx.overrides) stan::apply_config_entry(ctx.run, key, value);
    stan::apply_env_seed(ctx.run);
}

std::vector<stan::ExperimentRow> parse_report_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw stan::IoError("cannot open " + path);
    std::string line;
    if (!std::getline(is, line) ||
        line != "variant,cross,intra,branch,multilevel,task,metric,value,seconds")
        throw stan::FormatError("not a report CSV: " + path);
    std::map<std::string, stan::ExperimentRow> rows;
    std::vector<std::string> order;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) cols.push_back(col);
        if (cols.size() != 9) throw stan::FormatError("malformed report line: " + line);
        auto [it, fresh] = rows.try_emplace(cols[0]);
        stan::ExperimentRow& row = it->second;
        if (fresh) {
            order.push_back(cols[0]);
            row.variant = cols[0];
            row.cross = cols[1] == "1";
            row.intra = cols[2] == "1";
            row.branch = cols[3] == "1";
            row.multilevel = cols[4] == "1";
            row.task = cols[5];
            row.seconds = std::stod(cols[8]);
        }
        const std::string& metric = cols[6];
        const double value = std::stod(cols[7]);
        auto& m = row.metrics;
        if (metric == "r1") m.r_at[1] = value;
        else if (metric == "r5") m.r_at[5] = value;
        else if (metric == "r10") m.r_at[10] = value;
        else if (metric == "mdr") m.median_rank = value;
        else if (metric == "r1_v2t") m.r_at_v2t[1] = value;
        else if (metric == "r5_v2t") m.r_at_v2t[5] = value;
        else if (metric == "r10_v2t") m.r_at_v2t[10] = value;
        else if (metric == "mdr_v2t") m.median_rank_v2t = value;
        else if (metric == "pos_sim") m.avg_pos_sim = value;
        else if (metric == "margin") m.avg_margin = value;
        else if (metric == "top1") m.top1 = value;
        else if (metric == "top5") m.top5 = value;
        else if (metric == "rev_top1") m.reverse_pair_top1 = value;
        else throw stan::FormatError("unknown metric in report: " + metric);
    }
    std::vector<stan::ExperimentRow> out;
    for (const auto& v : order) out.push_back(rows.at(v));
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"STAN branch-network experiment harness"};
    app.require_subcommand(1);

    CliRun ctx;
    bool retrieval_data = false;
    std::string out_path, weights_out, weights_in, trace_out, report_in;
    std::string suite_name = "ablation";

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset file");
    add_run_options(gen, ctx);
    gen->add_option("--out", out_path, "output dataset path")->required();
    gen->add_flag("--retrieval", retrieval_data, "one clip per (shape,color,motion) tuple");

    auto* tr = app.add_subcommand("train", "train the branch on a dataset");
    add_run_options(tr, ctx);
    tr->add_option("--weights-out", weights_out, "trained weight file path");
    tr->add_option("--trace-out", trace_out, "per-step loss trace (text, one loss per line)");

    auto* ev = app.add_subcommand("eval", "evaluate a model on a dataset");
    add_run_options(ev, ctx);
    ev->add_option("--weights", weights_in, "weight file from train (fresh model if omitted)");

    auto* su = app.add_subcommand("suite", "run an experiment suite");
    add_run_options(su, ctx);
    su->add_option("--suite", suite_name, "ablation | level_sweep | layer_sweep");

    auto* rep = app.add_subcommand("report", "re-emit a report CSV in canonical form");
    rep->add_option("--in", report_in, "input report CSV")->required();
    rep->add_option("--out", out_path, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            finalize_run(ctx);
            stan::Dataset ds =
                retrieval_data
                    ? stan::generate_retrieval_dataset(ctx.run.seed, ctx.run.model)
                    : stan::generate_dataset(ctx.run.seed, ctx.run.n_per_class, ctx.run.model);
            stan::save_dataset(ds, out_path);
            std::cout << "wrote " << ds.clips.size() << " clips to " << out_path << "\n";
        } else if (tr->parsed()) {
            finalize_run(ctx);
            if (ctx.run.dataset_path.empty())
                throw stan::ConfigError("train requires --dataset");
            stan::Dataset ds = stan::load_dataset(ctx.run.dataset_path);
            stan::TrainResult result = stan::train(ctx.run, ds);
            if (!weights_out.empty()) {
                stan::ParamList params = result.model.trainable_params();
                stan::save_weights(params, weights_out);
            }
            if (!trace_out.empty()) {
                std::ofstream os(trace_out, std::ios::binary | std::ios::trunc);
                char buf[64];
                for (double l : result.loss_trace) {
                    std::snprintf(buf, sizeof(buf), "%.12g\n", l);
                    os << buf;
                }
            }
            std::cout << "steps=" << result.loss_trace.size()
                      << " first_loss=" << (result.loss_trace.empty() ? 0.0 : result.loss_trace.front())
                      << " last_loss=" << (result.loss_trace.empty() ? 0.0 : result.loss_trace.back())
                      << "\n";
        } else if (ev->parsed()) {
            finalize_run(ctx);
            if (ctx.run.dataset_path.empty()) throw stan::ConfigError("eval requires --dataset");
            stan::Dataset ds = stan::load_dataset(ctx.run.dataset_path);
            stan::VideoTextModel model = stan::make_model(ctx.run);
            if (!weights_in.empty()) {
                stan::ParamList params = model.trainable_params();
                stan::load_weights(params, weights_in);
            }
            stan::MetricsReport metrics = stan::evaluate(model, ds, ctx.run.task, ctx.run.use_dsl);
            stan::ExperimentRow row;
            row.variant = "eval";
            row.cross = ctx.run.model.use_cross_frame;
            row.intra = ctx.run.model.use_intra_frame;
            row.branch = ctx.run.model.use_branch;
            row.multilevel = ctx.run.model.use_multilevel;
            row.task = ctx.run.task;
            row.metrics = metrics;
            const std::string csv = stan::report_to_csv({row});
            if (!ctx.run.report_path.empty()) {
                std::ofstream os(ctx.run.report_path, std::ios::binary | std::ios::trunc);
                os << csv;
            }
            std::cout << csv;
        } else if (su->parsed()) {
            finalize_run(ctx);
            std::vector<stan::ExperimentRow> rows = stan::run_experiment_suite(ctx.run, suite_name);
            if (!ctx.run.report_path.empty()) stan::emit_report(rows, ctx.run.report_path);
            std::cout << stan::report_to_csv(rows);
        } else if (rep->parsed()) {
            stan::emit_report(parse_report_csv(report_in), out_path);
            std::cout << "wrote " << out_path << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
