#include "stan/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace stan {

SimilarityMatrix cosine_sim_matrix(const Tensor& video_embs, const Tensor& text_embs) {
    if (video_embs.rank() != 2 || text_embs.rank() != 2 ||
        video_embs.shape()[1] != text_embs.shape()[1])
        throw ShapeError("cosine_sim_matrix: expected (N_v,D) and (N_t,D), got " +
                         shape_str(video_embs.shape()) + " and " + shape_str(text_embs.shape()));
    SimilarityMatrix sim;
    sim.values = matmul(row_normalize(video_embs), permute(row_normalize(text_embs), {1, 0}));
    if (video_embs.shape()[0] == text_embs.shape()[0]) {
        sim.ground_truth.resize(video_embs.shape()[0]);
        for (size_t i = 0; i < sim.ground_truth.size(); ++i) sim.ground_truth[i] = static_cast<int>(i);
    }
    return sim;
}

static void require_paired(const SimilarityMatrix& sim, const char* who) {
    if (sim.n_videos() != sim.n_texts())
        throw ShapeError(std::string(who) + ": requires a square paired batch, got " +
                         shape_str(sim.values.shape()));
    if (static_cast<int>(sim.ground_truth.size()) != sim.n_videos())
        throw ParamError(std::string(who) + ": ground truth missing");
    for (size_t i = 0; i < sim.ground_truth.size(); ++i)
        if (sim.ground_truth[i] != static_cast<int>(i))
            throw ParamError(std::string(who) + ": ground truth must be the diagonal");
}

Tensor nce_loss(const SimilarityMatrix& sim, double temperature) {
    if (temperature <= 0.0) throw ParamError("nce_loss: temperature must be positive");
    require_paired(sim, "nce_loss");
    std::vector<int> diag(sim.n_videos());
    for (size_t i = 0; i < diag.size(); ++i) diag[i] = static_cast<int>(i);
    Tensor logits = scale(sim.values, 1.0 / temperature);
    Tensor row_ce = cross_entropy_logits(logits, diag);
    Tensor col_ce = cross_entropy_logits(permute(logits, {1, 0}), diag);
    return scale(add(row_ce, col_ce), 0.5);
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    return cross_entropy_logits(logits, labels);
}

SimilarityMatrix dsl_transform(const SimilarityMatrix& sim, double temperature, bool training) {
    if (training) throw UsageError("dsl_transform is an inference-only step");
    if (temperature <= 0.0) throw ParamError("dsl_transform: temperature must be positive");
    const int Nv = sim.n_videos(), Nt = sim.n_texts();
    std::vector<double> out(static_cast<size_t>(Nv) * Nt);
    for (int j = 0; j < Nt; ++j) {
        double mx = -1e308;
        for (int i = 0; i < Nv; ++i)
            mx = std::max(mx, sim.values.values()[static_cast<size_t>(i) * Nt + j] / temperature);
        double z = 0.0;
        std::vector<double> w(Nv);
        for (int i = 0; i < Nv; ++i) {
            w[i] = std::exp(sim.values.values()[static_cast<size_t>(i) * Nt + j] / temperature - mx);
            z += w[i];
        }
        for (int i = 0; i < Nv; ++i)
            out[static_cast<size_t>(i) * Nt + j] =
                (w[i] / z) * sim.values.values()[static_cast<size_t>(i) * Nt + j];
    }
    SimilarityMatrix res;
    res.values = Tensor::from({Nv, Nt}, std::move(out));
    res.ground_truth = sim.ground_truth;
    return res;
}

// 1-based rank of candidate `target` in a row, descending values, ties
// broken toward the lower index.
static int rank_of(const double* row, int n, int target) {
    const double s = row[target];
    int rank = 1;
    for (int j = 0; j < n; ++j) {
        if (row[j] > s || (row[j] == s && j < target)) ++rank;
    }
    return rank;
}

MetricsReport retrieval_metrics(const SimilarityMatrix& sim, const std::vector<int>& Ks) {
    const int Nv = sim.n_videos(), Nt = sim.n_texts();
    if (static_cast<int>(sim.ground_truth.size()) != Nv)
        throw ParamError("retrieval_metrics: ground truth missing for some query");
    for (int g : sim.ground_truth)
        if (g < 0 || g >= Nt) throw ParamError("retrieval_metrics: ground truth index out of range");

    std::vector<int> ranks(Nv);
    for (int i = 0; i < Nv; ++i)
        ranks[i] = rank_of(sim.values.values().data() + static_cast<size_t>(i) * Nt, Nt,
                           sim.ground_truth[i]);

    MetricsReport report;
    for (int K : Ks) {
        int hits = 0;
        for (int r : ranks)
            if (r <= K) ++hits;
        report.r_at[K] = 100.0 * hits / Nv;
    }
    std::vector<int> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    report.median_rank = (Nv % 2 == 1)
                             ? sorted[Nv / 2]
                             : 0.5 * (sorted[Nv / 2 - 1] + sorted[Nv / 2]);
    auto [pos, margin] = Nt >= 2 ? alignment_diagnostics(sim) : std::pair<double, double>{0.0, 0.0};
    report.avg_pos_sim = pos;
    report.avg_margin = margin;
    return report;
}

double topk_accuracy(const Tensor& logits, const std::vector<int>& labels, int k) {
    if (logits.rank() != 2) throw ShapeError("topk_accuracy: logits must be (N,C)");
    const int N = logits.shape()[0], C = logits.shape()[1];
    if (k > C) throw ParamError("topk_accuracy: k=" + std::to_string(k) + " exceeds C=" +
                                std::to_string(C));
    if (static_cast<int>(labels.size()) != N) throw ParamError("topk_accuracy: label count mismatch");
    int hits = 0;
    for (int i = 0; i < N; ++i)
        if (rank_of(logits.values().data() + static_cast<size_t>(i) * C, C, labels[i]) <= k) ++hits;
    return 100.0 * hits / N;
}

std::pair<double, double> alignment_diagnostics(const SimilarityMatrix& sim) {
    const int Nv = sim.n_videos(), Nt = sim.n_texts();
    if (static_cast<int>(sim.ground_truth.size()) != Nv)
        throw ParamError("alignment_diagnostics: ground truth missing");
    if (Nt < 2) throw ParamError("alignment_diagnostics: margin undefined for a single candidate");
    double pos_sum = 0.0, margin_sum = 0.0;
    for (int i = 0; i < Nv; ++i) {
        const double* row = sim.values.values().data() + static_cast<size_t>(i) * Nt;
        const double pos = row[sim.ground_truth[i]];
        double neg = 0.0;
        for (int j = 0; j < Nt; ++j)
            if (j != sim.ground_truth[i]) neg += row[j];
        neg /= (Nt - 1);
        pos_sum += pos;
        margin_sum += pos - neg;
    }
    return {pos_sum / Nv, margin_sum / Nv};
}

} // namespace stan
