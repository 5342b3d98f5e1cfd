#pragma once

#include <string>
#include <vector>

#include "stan/model.hpp"
#include "stan/objectives.hpp"
#include "stan/optimizer.hpp"
#include "stan/synthdata.hpp"

namespace stan {

struct RunConfig {
    ModelConfig model;
    std::string task = "recognition"; // or "retrieval"
    int epochs = 16;
    int batch_size = 32;
    int n_per_class = 16;
    double lr_backbone = 2e-6; // retained for parity; the backbone is frozen
    double lr_branch = 2e-3;
    double weight_decay = 0.02;
    std::string schedule = "cosine";
    std::uint64_t seed = 0;
    std::string dataset_path;
    std::string report_path;
    bool use_dsl = false;

    void validate() const;
};

struct TrainResult {
    VideoTextModel model;
    std::vector<double> loss_trace; // one entry per optimizer step
};

// Fresh model for a run; train() builds its model the same way, so an eval
// process can reconstruct the frozen backbone from config + seed and load
// only the trained parameters from the weight file.
VideoTextModel make_model(const RunConfig& run);

// Backbone features per clip; constant across training because the backbone
// is frozen, so they are computed once.
std::vector<BackboneOutput> precompute_features(const VideoTextModel& model, const Dataset& ds);

TrainResult train(const RunConfig& run, const Dataset& ds);

MetricsReport evaluate(const VideoTextModel& model, const Dataset& ds, const std::string& task,
                       bool use_dsl);

struct ExperimentRow {
    std::string variant;
    bool cross = false, intra = false, branch = false, multilevel = false;
    std::string task;
    MetricsReport metrics;
    double seconds = 0.0;
};

// suite in {ablation, level_sweep, layer_sweep}
std::vector<ExperimentRow> run_experiment_suite(const RunConfig& base, const std::string& suite);

double primary_metric(const ExperimentRow& row);

std::string report_to_csv(std::vector<ExperimentRow> rows);
void emit_report(const std::vector<ExperimentRow>& rows, const std::string& path);

// Line-oriented "key = value" config file; unknown keys are an error.
void apply_config_file(RunConfig& run, const std::string& path);
void apply_config_entry(RunConfig& run, const std::string& key, const std::string& value);

// STAN_SEED environment variable overrides the configured seed.
void apply_env_seed(RunConfig& run);

} // namespace stan
