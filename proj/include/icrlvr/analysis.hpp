#pragma once
// Empirical analyses: quality-bucket statistics for the gain-vs-quality
// ordering, rank correlations, and the training-dynamics probe that tracks
// Evidence Gain and quality over correct rollouts.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "icrlvr/autoregressive.hpp"
#include "icrlvr/core.hpp"
#include "icrlvr/corpus.hpp"
#include "icrlvr/evidence.hpp"
#include "icrlvr/layout.hpp"
#include "icrlvr/stats.hpp"

namespace icr {

// Spearman rank correlation (average-rank ties). Throws on length mismatch,
// fewer than 3 points, or constant input.
inline double spearman(std::span<const double> xs, std::span<const double> ys) {
    return stats::spearman(xs, ys);
}

struct QualityBucket {
    int score = 0;  // integer quality bucket, 1..5
    long count = 0;
    double mean_gain = 0.0;
    double ci_halfwidth = 0.0;  // 1.96 * sample std / sqrt(n)
};

struct BucketStats {
    std::vector<QualityBucket> buckets;  // only non-empty buckets, ascending score
    bool monotone_nondecreasing = false; // are bucket means non-decreasing in score?
};

// Buckets (quality score, gain) pairs at integer scores by rounding, then
// reports per-bucket mean gain with a normal-approximation 95% interval.
inline BucketStats bucket_stats(std::span<const std::pair<double, double>> scored) {
    if (scored.empty()) throw std::invalid_argument("bucket_stats: empty input");
    std::array<std::vector<double>, 5> by_score;
    for (const auto& [quality, gain] : scored) {
        const int s = std::clamp(static_cast<int>(std::lround(quality)), 1, 5);
        by_score[static_cast<size_t>(s - 1)].push_back(gain);
    }
    BucketStats out;
    out.monotone_nondecreasing = true;
    double prev_mean = -std::numeric_limits<double>::infinity();
    for (int s = 1; s <= 5; ++s) {
        const std::vector<double>& xs = by_score[static_cast<size_t>(s - 1)];
        if (xs.empty()) continue;
        QualityBucket b;
        b.score = s;
        b.count = static_cast<long>(xs.size());
        b.mean_gain = stats::mean(xs);
        b.ci_halfwidth = 1.96 * std::sqrt(stats::sample_variance(xs) / static_cast<double>(xs.size()));
        if (b.mean_gain < prev_mean) out.monotone_nondecreasing = false;
        prev_mean = b.mean_gain;
        out.buckets.push_back(b);
    }
    return out;
}

struct DynamicsRow {
    int step = 0;
    long n_total = 0;    // rollouts drawn
    long n_correct = 0;  // rollouts kept (verify = 1)
    bool has_data = false;
    double mean_gain = 0.0;
    double mean_quality = 0.0;
    bool has_rho = false;
    double spearman_rho = 0.0;
    long contexts_checked = 0;          // zero-shot structural assertions performed
    std::vector<size_t> query_indices;  // sampled task indices (rng contract)
};

// Zero-shot rollouts on sampled training questions; only correct traces are
// kept. Evidence Gain is computed against the held-out set (never the
// training demonstrations) and correlated with the quality proxy. When no
// rollout is correct the row carries empty-sample markers, never numbers.
inline DynamicsRow dynamics_probe(const AutoregressivePolicy& policy, const PromptLayout& layout,
                                  const Vocab& vocab, std::span<const Task> tasks,
                                  const DemoSet& held_out, int n_q, int rollouts_per_q,
                                  double temperature, int max_len, Rng& rng, int step = 0) {
    if (held_out.demos.empty()) throw std::invalid_argument("dynamics_probe: held-out set is empty");
    if (n_q < 1 || rollouts_per_q < 1)
        throw std::invalid_argument("dynamics_probe: need at least one query and one rollout");
    if (tasks.empty()) throw std::invalid_argument("dynamics_probe: no tasks to sample from");

    // sample query indices: a shuffled prefix when possible, so one rng state
    // yields the same query set for any policy being probed
    std::vector<size_t> order(tasks.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<size_t> picked;
    for (int i = 0; i < n_q; ++i) picked.push_back(order[static_cast<size_t>(i) % order.size()]);

    DynamicsRow row;
    row.step = step;
    row.query_indices = picked;
    ArBackend backend(policy, layout);
    std::vector<double> gains, qualities;
    for (size_t qi : picked) {
        const Task& task = tasks[qi];
        const Sequence ctx = layout.zero_shot(task.question);
        if (!layout.is_zero_shot_context(ctx, task.question))
            throw std::logic_error("dynamics_probe: evaluation context contains demonstration tokens");
        ++row.contexts_checked;
        for (int g = 0; g < rollouts_per_q; ++g) {
            const Sequence trace = policy.sample(ctx, max_len, temperature, rng).trace;
            ++row.n_total;
            if (verify(vocab, task.question, trace) != 1) continue;
            ++row.n_correct;
            gains.push_back(evidence_gain(backend, task.question, trace, held_out.demos).mean_gain);
            qualities.push_back(quality_proxy(vocab, task.question, trace));
        }
    }
    if (!gains.empty()) {
        row.has_data = true;
        row.mean_gain = stats::mean(gains);
        row.mean_quality = stats::mean(qualities);
        if (gains.size() >= 3) {
            try {
                row.spearman_rho = stats::spearman(gains, qualities);
                row.has_rho = true;
            } catch (const std::invalid_argument&) {
                row.has_rho = false;  // constant gains or qualities
            }
        }
    }
    return row;
}

}  // namespace icr
