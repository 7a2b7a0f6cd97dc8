#pragma once
// Exact and Monte-Carlo estimators for the conditioned objective
//   J_IC = E_q E_{e ~ E, r ~ pi(.|e,q)} [R(q, r)]
// and its reweighted form
//   J    = E_q E_{r ~ pi(.|q)} [R(q, r) * w(q, r)],  w = mean_e exp(gain_e).
// The exact estimators enumerate outcomes; the two values agree to machine
// precision on joints satisfying the independence conditions, which is the
// equivalence oracle. The Monte-Carlo pair exists to compare variances: the
// explicitly reweighted estimator pays for the weight spread.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "icrlvr/autoregressive.hpp"
#include "icrlvr/core.hpp"
#include "icrlvr/evidence.hpp"
#include "icrlvr/tabular.hpp"

namespace icr {

enum class EstimateMode { ExactEnumeration, MonteCarlo };

struct ObjectiveEstimate {
    double value = 0.0;
    double std_error = 0.0;  // 0 in exact mode
    EstimateMode mode = EstimateMode::ExactEnumeration;
    long n = 0;  // enumerated terms or Monte-Carlo samples
};

// Exact mode refuses instances beyond this many enumerated terms.
inline constexpr long kEnumerationCap = 10'000'000;

using TabularReward = std::function<double(int q, int r)>;
using SequenceReward = std::function<double(const Sequence& q, const Sequence& r)>;

inline SequenceReward make_verify_reward(const Vocab& v) {
    return [&v](const Sequence& q, const Sequence& r) { return static_cast<double>(verify(v, q, r)); };
}

// ---- exact estimators, tabular backend --------------------------------------

inline ObjectiveEstimate j_ic_exact(const TabularBackend& b, std::span<const int> questions,
                                    std::span<const TabularBackend::Demo> demos,
                                    const TabularReward& reward) {
    if (questions.empty() || demos.empty())
        throw std::invalid_argument("j_ic_exact: need questions and demonstrations");
    const long terms = static_cast<long>(questions.size()) * static_cast<long>(demos.size()) *
                       b.trace_space();
    if (terms > kEnumerationCap) throw ConfigError("j_ic_exact: enumeration budget exceeded");

    double q_acc = 0.0;
    for (int q : questions) {
        double e_acc = 0.0;
        for (const auto& e : demos) {
            const SegmentAssignment given = {e.first, e.second, q, -1};
            const std::vector<double> dist = conditional_distribution(*b.joint, Segment::Trace, given);
            double r_acc = 0.0;
            for (int r = 0; r < b.trace_space(); ++r) r_acc += dist[static_cast<size_t>(r)] * reward(q, r);
            e_acc += r_acc;
        }
        q_acc += e_acc / static_cast<double>(demos.size());
    }
    ObjectiveEstimate est;
    est.value = q_acc / static_cast<double>(questions.size());
    est.mode = EstimateMode::ExactEnumeration;
    est.n = terms;
    return est;
}

inline ObjectiveEstimate j_reweighted_exact(const TabularBackend& b, std::span<const int> questions,
                                            std::span<const TabularBackend::Demo> demos,
                                            const TabularReward& reward) {
    if (questions.empty() || demos.empty())
        throw std::invalid_argument("j_reweighted_exact: need questions and demonstrations");
    const long terms = static_cast<long>(questions.size()) * static_cast<long>(demos.size()) *
                       b.trace_space();
    if (terms > kEnumerationCap) throw ConfigError("j_reweighted_exact: enumeration budget exceeded");

    double q_acc = 0.0;
    for (int q : questions) {
        const SegmentAssignment given = {-1, -1, q, -1};
        const std::vector<double> dist = conditional_distribution(*b.joint, Segment::Trace, given);
        double r_acc = 0.0;
        for (int r = 0; r < b.trace_space(); ++r) {
            const double rew = reward(q, r);
            if (rew == 0.0) continue;  // weight only matters on rewarded traces
            const EvidenceGainReport rep = evidence_gain(b, q, r, demos);
            r_acc += dist[static_cast<size_t>(r)] * rew * rep.weight;
        }
        q_acc += r_acc;
    }
    ObjectiveEstimate est;
    est.value = q_acc / static_cast<double>(questions.size());
    est.mode = EstimateMode::ExactEnumeration;
    est.n = terms;
    return est;
}

inline double equivalence_gap(const TabularBackend& b, std::span<const int> questions,
                              std::span<const TabularBackend::Demo> demos,
                              const TabularReward& reward) {
    return std::abs(j_ic_exact(b, questions, demos, reward).value -
                    j_reweighted_exact(b, questions, demos, reward).value);
}

// ---- exact estimators, autoregressive backend -------------------------------

// Enumerates the outcome space of sampling: every trace that ends with the
// first end token, plus every end-free prefix of length max_len (a truncated
// rollout). Calls visit(trace, logprob) per outcome.
template <class Fn>
void enumerate_traces(const AutoregressivePolicy& p, const Sequence& context, int max_len,
                      long& budget, Fn&& visit) {
    struct Walker {
        const AutoregressivePolicy& p;
        int max_len;
        long& budget;
        Fn& visit;
        Sequence ctx;
        Sequence trace;

        void walk(double logprob, int depth) {
            if (--budget < 0) throw ConfigError("enumerate_traces: enumeration budget exceeded");
            const std::vector<double> next = p.next_token_logprobs(ctx);
            for (Token t = 0; t < p.vocab().size; ++t) {
                const double lp = logprob + next[static_cast<size_t>(t)];
                trace.push_back(t);
                ctx.push_back(t);
                if (t == p.vocab().end || depth + 1 == max_len) {
                    visit(trace, lp);
                } else {
                    walk(lp, depth + 1);
                }
                trace.pop_back();
                ctx.pop_back();
            }
        }
    };
    if (max_len < 1) throw std::invalid_argument("enumerate_traces: max_len must be >= 1");
    Walker w{p, max_len, budget, visit, context, {}};
    w.walk(0.0, 0);
}

inline ObjectiveEstimate j_ic_exact(const ArBackend& b, std::span<const Sequence> questions,
                                    std::span<const Demonstration> demos,
                                    const SequenceReward& reward, int max_len) {
    if (questions.empty() || demos.empty())
        throw std::invalid_argument("j_ic_exact: need questions and demonstrations");
    long budget = kEnumerationCap;
    long terms = 0;
    double q_acc = 0.0;
    for (const Sequence& q : questions) {
        double e_acc = 0.0;
        for (const Demonstration& e : demos) {
            double r_acc = 0.0;
            enumerate_traces(*b.policy, b.layout.conditioned(e.question, e.reference, q), max_len,
                             budget, [&](const Sequence& trace, double lp) {
                                 ++terms;
                                 const double rew = reward(q, trace);
                                 if (rew != 0.0) r_acc += std::exp(lp) * rew;
                             });
            e_acc += r_acc;
        }
        q_acc += e_acc / static_cast<double>(demos.size());
    }
    ObjectiveEstimate est;
    est.value = q_acc / static_cast<double>(questions.size());
    est.mode = EstimateMode::ExactEnumeration;
    est.n = terms;
    return est;
}

inline ObjectiveEstimate j_reweighted_exact(const ArBackend& b, std::span<const Sequence> questions,
                                            std::span<const Demonstration> demos,
                                            const SequenceReward& reward, int max_len) {
    if (questions.empty() || demos.empty())
        throw std::invalid_argument("j_reweighted_exact: need questions and demonstrations");
    long budget = kEnumerationCap;
    long terms = 0;
    double q_acc = 0.0;
    for (const Sequence& q : questions) {
        double r_acc = 0.0;
        enumerate_traces(*b.policy, b.layout.zero_shot(q), max_len, budget,
                         [&](const Sequence& trace, double lp) {
                             ++terms;
                             const double rew = reward(q, trace);
                             if (rew == 0.0) return;
                             const EvidenceGainReport rep = evidence_gain(b, q, trace, demos);
                             r_acc += std::exp(lp) * rew * rep.weight;
                         });
        q_acc += r_acc;
    }
    ObjectiveEstimate est;
    est.value = q_acc / static_cast<double>(questions.size());
    est.mode = EstimateMode::ExactEnumeration;
    est.n = terms;
    return est;
}

// ---- Monte-Carlo estimators (either backend) --------------------------------

namespace detail {

inline ObjectiveEstimate finish_mc(std::vector<double>&& draws) {
    ObjectiveEstimate est;
    est.mode = EstimateMode::MonteCarlo;
    est.n = static_cast<long>(draws.size());
    est.value = stats::mean(draws);
    est.std_error = std::sqrt(stats::sample_variance(draws) / static_cast<double>(draws.size()));
    return est;
}

}  // namespace detail

// Conditioned rollouts: e ~ E, r ~ pi(.|e,q); plain binary reward.
template <class Backend, class RewardFn>
ObjectiveEstimate j_ic_mc(const Backend& b, const std::vector<typename Backend::Query>& questions,
                          const std::vector<typename Backend::Demo>& demos, RewardFn reward, long n,
                          Rng& rng) {
    if (n < 2) throw std::invalid_argument("j_ic_mc: need n >= 2");
    if (questions.empty() || demos.empty())
        throw std::invalid_argument("j_ic_mc: need questions and demonstrations");
    std::vector<double> draws;
    draws.reserve(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) {
        const auto& q = questions[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(questions.size()) - 1))];
        const auto& e = demos[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(demos.size()) - 1))];
        const auto r = b.sample_conditioned(q, e, rng);
        draws.push_back(reward(q, r));
    }
    return detail::finish_mc(std::move(draws));
}

// Zero-shot rollouts with the weight computed explicitly per rollout. Used to
// demonstrate the variance cost of explicit reweighting, not for training.
template <class Backend, class RewardFn>
ObjectiveEstimate j_reweighted_mc(const Backend& b,
                                  const std::vector<typename Backend::Query>& questions,
                                  const std::vector<typename Backend::Demo>& demos, RewardFn reward,
                                  long n, Rng& rng) {
    if (n < 2) throw std::invalid_argument("j_reweighted_mc: need n >= 2");
    if (questions.empty() || demos.empty())
        throw std::invalid_argument("j_reweighted_mc: need questions and demonstrations");
    std::vector<double> draws;
    draws.reserve(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) {
        const auto& q = questions[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(questions.size()) - 1))];
        const auto r = b.sample_zero_shot(q, rng);
        const double rew = reward(q, r);
        if (rew == 0.0) {
            draws.push_back(0.0);
            continue;
        }
        draws.push_back(rew * evidence_gain(b, q, r, demos).weight);
    }
    return detail::finish_mc(std::move(draws));
}

}  // namespace icr
