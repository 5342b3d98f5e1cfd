#pragma once

#include <map>
#include <vector>

#include "stan/tensor.hpp"

namespace stan {

struct SimilarityMatrix {
    Tensor values;                 // [N_v, N_t]
    std::vector<int> ground_truth; // query row -> matching column

    int n_videos() const { return values.shape()[0]; }
    int n_texts() const { return values.shape()[1]; }
};

struct MetricsReport {
    std::map<int, double> r_at; // K -> percentage (text -> video direction)
    double median_rank = 0.0;
    std::map<int, double> r_at_v2t; // video -> text direction
    double median_rank_v2t = 0.0;
    double top1 = 0.0, top5 = 0.0;
    double avg_pos_sim = 0.0, avg_margin = 0.0;
    double reverse_pair_top1 = 0.0; // accuracy restricted to reverse-paired classes
};

SimilarityMatrix cosine_sim_matrix(const Tensor& video_embs, const Tensor& text_embs);

// Symmetric InfoNCE over a paired (square, diagonal ground truth) batch.
Tensor nce_loss(const SimilarityMatrix& sim, double temperature);

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Dual-softmax reweighting: values'[i,j] = softmax_i(values[.,j]/temp) * values[i,j].
// Inference-time only.
SimilarityMatrix dsl_transform(const SimilarityMatrix& sim, double temperature = 1.0,
                               bool training = false);

// Rank-based retrieval metrics; ties broken toward the lower candidate index.
MetricsReport retrieval_metrics(const SimilarityMatrix& sim,
                                const std::vector<int>& Ks = {1, 5, 10});

double topk_accuracy(const Tensor& logits, const std::vector<int>& labels, int k);

// (avg positive similarity, avg positive-minus-mean-negative margin)
std::pair<double, double> alignment_diagnostics(const SimilarityMatrix& sim);

} // namespace stan
