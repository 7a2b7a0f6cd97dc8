#pragma once
// Identity checks: the unconditional Bayes expansion (holds for any positive
// joint), the conditioned-policy decomposition (needs the independence
// conditions A1/A2), and the empirical independence metric delta.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "icrlvr/autoregressive.hpp"
#include "icrlvr/core.hpp"
#include "icrlvr/layout.hpp"
#include "icrlvr/tabular.hpp"

namespace icr {

enum class IdentityForm { ExactBayes, Lemma };

struct IdentityResidualReport {
    IdentityForm form = IdentityForm::ExactBayes;
    double max_residual = 0.0;
    double mean_residual = 0.0;
    std::array<int, 4> worst_tuple = {0, 0, 0, 0};
    size_t tuples = 0;
};

// pi(r | e_q, e_r, q) = pi(r | e_q, q) * pi(e_r | q, r, e_q) / pi(e_r | q, e_q)
// A pure conditional-probability identity: the residual must vanish for any
// positive joint, no independence assumption involved.
inline IdentityResidualReport check_exact_bayes(const TabularJointPolicy& p) {
    IdentityResidualReport rep;
    rep.form = IdentityForm::ExactBayes;
    double sum = 0.0;
    for (int eq = 0; eq < p.sizes[0]; ++eq)
        for (int er = 0; er < p.sizes[1]; ++er)
            for (int q = 0; q < p.sizes[2]; ++q)
                for (int r = 0; r < p.sizes[3]; ++r) {
                    const double lhs =
                        conditional_prob(p, Segment::Trace, r, {eq, er, q, -1});
                    const double r_given_eq_q =
                        conditional_prob(p, Segment::Trace, r, {eq, -1, q, -1});
                    const double er_given_qreq =
                        conditional_prob(p, Segment::DemoTrace, er, {eq, -1, q, r});
                    const double er_given_qeq =
                        conditional_prob(p, Segment::DemoTrace, er, {eq, -1, q, -1});
                    const double rhs = r_given_eq_q * er_given_qreq / er_given_qeq;
                    const double residual = std::abs(lhs - rhs);
                    sum += residual;
                    ++rep.tuples;
                    if (residual > rep.max_residual) {
                        rep.max_residual = residual;
                        rep.worst_tuple = {eq, er, q, r};
                    }
                }
    rep.mean_residual = rep.tuples ? sum / static_cast<double>(rep.tuples) : 0.0;
    return rep;
}

// pi(r | e, q) = pi(r | q) * pi(e_r | q, r, e_q) / pi(e_r | e_q)
// Exact only under (A1)/(A2); on other joints the residual is reported and
// expected positive.
inline IdentityResidualReport check_lemma(const TabularJointPolicy& p) {
    IdentityResidualReport rep;
    rep.form = IdentityForm::Lemma;
    double sum = 0.0;
    for (int eq = 0; eq < p.sizes[0]; ++eq)
        for (int er = 0; er < p.sizes[1]; ++er)
            for (int q = 0; q < p.sizes[2]; ++q)
                for (int r = 0; r < p.sizes[3]; ++r) {
                    const double lhs =
                        conditional_prob(p, Segment::Trace, r, {eq, er, q, -1});
                    const double r_given_q =
                        conditional_prob(p, Segment::Trace, r, {-1, -1, q, -1});
                    const double er_given_qreq =
                        conditional_prob(p, Segment::DemoTrace, er, {eq, -1, q, r});
                    const double er_given_eq =
                        conditional_prob(p, Segment::DemoTrace, er, {eq, -1, -1, -1});
                    const double rhs = r_given_q * er_given_qreq / er_given_eq;
                    const double residual = std::abs(lhs - rhs);
                    sum += residual;
                    ++rep.tuples;
                    if (residual > rep.max_residual) {
                        rep.max_residual = residual;
                        rep.worst_tuple = {eq, er, q, r};
                    }
                }
    rep.mean_residual = rep.tuples ? sum / static_cast<double>(rep.tuples) : 0.0;
    return rep;
}

struct IndependenceReport {
    double delta = 0.0;      // mean relative change in trace log-probability
    size_t sample_count = 0; // (q, r) x probe combinations measured
    size_t excluded = 0;     // probability-~1 traces skipped (|log pi| < 1e-6)
    double threshold = 0.05;

    bool pass() const { return delta < threshold; }
};

// delta = mean over pairs x probes of
//   |log pi(r | q', q) - log pi(r | q)| / |log pi(r | q)|
// Pairs whose trace is near probability 1 have an undefined relative change
// and are excluded (and counted).
inline IndependenceReport independence_delta(const AutoregressivePolicy& policy,
                                             const PromptLayout& layout,
                                             std::span<const std::pair<Sequence, Sequence>> pairs,
                                             std::span<const Sequence> probes,
                                             double threshold = 0.05) {
    if (pairs.empty() || probes.empty())
        throw std::invalid_argument("independence_delta: need non-empty pairs and probes");
    IndependenceReport rep;
    rep.threshold = threshold;
    double acc = 0.0;
    for (const auto& [q, r] : pairs) {
        const double base = policy.logprob(layout.zero_shot(q), r);
        if (std::abs(base) < 1e-6) {
            rep.excluded += probes.size();
            continue;
        }
        for (const Sequence& probe : probes) {
            const double prepended = policy.logprob(layout.prepended(probe, q), r);
            acc += std::abs(prepended - base) / std::abs(base);
            ++rep.sample_count;
        }
    }
    if (rep.sample_count > 0) rep.delta = acc / static_cast<double>(rep.sample_count);
    return rep;
}

// Tabular analog of the independence metric, probing both directions of the
// assumption: the relative change of log p(r | q) when a demonstration
// question is also conditioned on, and of log p(e_r | e_q) when the training
// question is. Zero on joints satisfying (A1)/(A2); paired with the Lemma
// residual it shows how the decomposition degrades as independence fails.
inline IndependenceReport tabular_delta(const TabularJointPolicy& p) {
    IndependenceReport rep;
    double acc = 0.0;
    for (int q = 0; q < p.sizes[2]; ++q)
        for (int r = 0; r < p.sizes[3]; ++r) {
            const double base = conditional_logprob(p, Segment::Trace, r, {-1, -1, q, -1});
            if (std::abs(base) < 1e-6) {
                rep.excluded += static_cast<size_t>(p.sizes[0]);
                continue;
            }
            for (int eq = 0; eq < p.sizes[0]; ++eq) {
                const double cond = conditional_logprob(p, Segment::Trace, r, {eq, -1, q, -1});
                acc += std::abs(cond - base) / std::abs(base);
                ++rep.sample_count;
            }
        }
    for (int eq = 0; eq < p.sizes[0]; ++eq)
        for (int er = 0; er < p.sizes[1]; ++er) {
            const double base = conditional_logprob(p, Segment::DemoTrace, er, {eq, -1, -1, -1});
            if (std::abs(base) < 1e-6) {
                rep.excluded += static_cast<size_t>(p.sizes[2]);
                continue;
            }
            for (int q = 0; q < p.sizes[2]; ++q) {
                const double cond = conditional_logprob(p, Segment::DemoTrace, er, {eq, -1, q, -1});
                acc += std::abs(cond - base) / std::abs(base);
                ++rep.sample_count;
            }
        }
    if (rep.sample_count > 0) rep.delta = acc / static_cast<double>(rep.sample_count);
    return rep;
}

}  // namespace icr
