#pragma once
// Evidence Gain: per-demonstration gains, the implicit weight, and the bound
// and log-linear diagnostics tied to it.
//
// For one candidate (q, r) and a demonstration e = (e_q, e_r):
//   gain_e = log pi(e_r | q, r, e_q) - log pi(e_r | e_q)
// The mean gain over the demonstration set is the Evidence Gain; the implicit
// weight is the empirical mean of exp(gain_e), computed in log-space so gains
// up to |700| stay finite.

#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "icrlvr/autoregressive.hpp"
#include "icrlvr/core.hpp"
#include "icrlvr/corpus.hpp"
#include "icrlvr/layout.hpp"
#include "icrlvr/stats.hpp"
#include "icrlvr/tabular.hpp"

namespace icr {

struct EvidenceGainReport {
    std::vector<double> per_demo;  // gain per demonstration
    double mean_gain = 0.0;        // Evidence Gain
    double log_weight = 0.0;       // log mean exp(per_demo)
    double weight = 1.0;           // implicit weight w
    double variance = 0.0;         // population variance of per_demo
    double jensen_gap = 0.0;       // w - exp(mean_gain), >= 0 up to rounding
    double taylor_estimate = 1.0;  // exp(mean_gain) * (1 + variance / 2)
};

inline EvidenceGainReport report_from_gains(std::vector<double> gains) {
    if (gains.empty()) throw std::invalid_argument("report_from_gains: empty demonstration set");
    EvidenceGainReport rep;
    rep.mean_gain = stats::mean(gains);
    rep.variance = stats::variance(gains);
    rep.log_weight = logsumexp(gains) - std::log(static_cast<double>(gains.size()));
    rep.weight = std::exp(rep.log_weight);
    rep.jensen_gap = rep.weight - std::exp(rep.mean_gain);
    rep.taylor_estimate = std::exp(rep.mean_gain) * (1.0 + 0.5 * rep.variance);
    rep.per_demo = std::move(gains);
    return rep;
}

// ---- policy backends --------------------------------------------------------

// Exact joint-table backend. Queries, traces, and demonstration halves are
// indices into the four segment spaces.
struct TabularBackend {
    const TabularJointPolicy* joint = nullptr;

    using Query = int;
    using Trace = int;
    using Demo = std::pair<int, int>;  // (e_q, e_r)

    double delta_e(int q, int r, const Demo& e) const {
        const SegmentAssignment probe = {e.first, -1, q, r};
        const SegmentAssignment bare = {e.first, -1, -1, -1};
        return conditional_logprob(*joint, Segment::DemoTrace, e.second, probe) -
               conditional_logprob(*joint, Segment::DemoTrace, e.second, bare);
    }

    double zero_shot_logprob(int q, int r) const {
        const SegmentAssignment given = {-1, -1, q, -1};
        return conditional_logprob(*joint, Segment::Trace, r, given);
    }

    double conditioned_logprob(int q, const Demo& e, int r) const {
        const SegmentAssignment given = {e.first, e.second, q, -1};
        return conditional_logprob(*joint, Segment::Trace, r, given);
    }

    int trace_space() const { return joint->sizes[3]; }

    int sample_zero_shot(int q, Rng& rng) const {
        const SegmentAssignment given = {-1, -1, q, -1};
        return sample_conditional(*joint, Segment::Trace, given, rng);
    }

    int sample_conditioned(int q, const Demo& e, Rng& rng) const {
        const SegmentAssignment given = {e.first, e.second, q, -1};
        return sample_conditional(*joint, Segment::Trace, given, rng);
    }

    // Every (e_q, e_r) pair as a demonstration, for exhaustive small checks.
    std::vector<Demo> all_demos() const {
        std::vector<Demo> out;
        for (int eq = 0; eq < joint->sizes[0]; ++eq)
            for (int er = 0; er < joint->sizes[1]; ++er) out.emplace_back(eq, er);
        return out;
    }
};

// Autoregressive backend: sequences rendered through the prompt layouts.
struct ArBackend {
    const AutoregressivePolicy* policy = nullptr;
    PromptLayout layout;
    double temperature = 1.0;
    int max_trace_len = 24;

    using Query = Sequence;
    using Trace = Sequence;
    using Demo = Demonstration;

    ArBackend(const AutoregressivePolicy& p, const PromptLayout& l)
        : policy(&p), layout(l) {}

    double delta_e(const Sequence& q, const Sequence& r, const Demonstration& e) const {
        const Sequence probe_ctx = layout.probe(q, r, e.question);
        const Sequence bare_ctx = layout.bare(e.question);
        return policy->logprob(probe_ctx, e.reference) - policy->logprob(bare_ctx, e.reference);
    }

    double zero_shot_logprob(const Sequence& q, const Sequence& r) const {
        return policy->logprob(layout.zero_shot(q), r);
    }

    double conditioned_logprob(const Sequence& q, const Demonstration& e, const Sequence& r) const {
        return policy->logprob(layout.conditioned(e.question, e.reference, q), r);
    }

    Sequence sample_zero_shot(const Sequence& q, Rng& rng) const {
        return policy->sample(layout.zero_shot(q), max_trace_len, temperature, rng).trace;
    }

    Sequence sample_conditioned(const Sequence& q, const Demonstration& e, Rng& rng) const {
        return policy->sample(layout.conditioned(e.question, e.reference, q), max_trace_len,
                              temperature, rng)
            .trace;
    }
};

// Evidence Gain of (q, r) against a demonstration collection, uniform
// weighting over demonstrations.
template <class Backend, class DemoRange>
EvidenceGainReport evidence_gain(const Backend& backend, const typename Backend::Query& q,
                                 const typename Backend::Trace& r, const DemoRange& demos) {
    std::vector<double> gains;
    for (const auto& e : demos) gains.push_back(backend.delta_e(q, r, e));
    return report_from_gains(std::move(gains));
}

// ---- bound diagnostics ------------------------------------------------------

struct BoundDiagnostics {
    double jensen_slack = 0.0;     // w - exp(mean gain); must be >= -1e-12
    double taylor_residual = 0.0;  // |log w - mean gain - log(1 + Var/2)|
    bool small_variance = false;   // residual is only asserted when Var <= 0.01
};

inline BoundDiagnostics check_bounds(const EvidenceGainReport& rep) {
    BoundDiagnostics d;
    d.jensen_slack = rep.weight - std::exp(rep.mean_gain);
    if (d.jensen_slack < -1e-12)
        throw std::logic_error("check_bounds: Jensen lower bound violated beyond tolerance");
    d.taylor_residual = std::abs(rep.log_weight - rep.mean_gain - std::log1p(0.5 * rep.variance));
    d.small_variance = rep.variance <= 0.01;
    return d;
}

// ---- log-linear relation ----------------------------------------------------

struct LogLinearFit {
    std::vector<std::pair<double, double>> samples;  // (mean gain, log weight)
    double pearson = 0.0;
    double spearman = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
};

inline LogLinearFit loglinear_fit(std::vector<std::pair<double, double>> samples) {
    if (samples.size() < 3) throw std::invalid_argument("loglinear_fit: need at least 3 samples");
    std::vector<double> xs, ys;
    xs.reserve(samples.size());
    ys.reserve(samples.size());
    for (const auto& [gain, logw] : samples) {
        xs.push_back(gain);
        ys.push_back(logw);
    }
    bool degenerate = true;
    for (double x : xs)
        if (x != xs.front()) degenerate = false;
    if (degenerate) throw std::invalid_argument("loglinear_fit: degenerate input, all gains identical");

    LogLinearFit fit;
    const stats::OlsFit ols = stats::ols(xs, ys);
    fit.slope = ols.slope;
    fit.intercept = ols.intercept;
    fit.pearson = stats::pearson(xs, ys);
    fit.spearman = stats::spearman(xs, ys);
    fit.samples = std::move(samples);
    return fit;
}

}  // namespace icr
