#pragma once
// Scientific check suites behind the `verify` subcommand: identity residuals,
// bound checks, objective equivalence, estimator variance ordering, the
// log-linear relation, and the independence metric. Each check carries its
// statistic, its tolerance, and a pass flag; the CLI prints one line per
// check and exits nonzero on any failure.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "icrlvr/analysis.hpp"
#include "icrlvr/autoregressive.hpp"
#include "icrlvr/core.hpp"
#include "icrlvr/corpus.hpp"
#include "icrlvr/evidence.hpp"
#include "icrlvr/identity.hpp"
#include "icrlvr/objective.hpp"
#include "icrlvr/tabular.hpp"
#include "icrlvr/trainer.hpp"

namespace icr {

struct SuiteCheck {
    std::string name;
    double statistic = 0.0;
    double tolerance = 0.0;
    bool greater_is_pass = false;  // statistic must exceed tolerance instead
    bool pass = false;
    std::string note;
};

inline SuiteCheck make_check(std::string name, double stat, double tol, bool greater_is_pass = false,
                             std::string note = "") {
    SuiteCheck c;
    c.name = std::move(name);
    c.statistic = stat;
    c.tolerance = tol;
    c.greater_is_pass = greater_is_pass;
    c.pass = greater_is_pass ? stat > tol : stat <= tol;
    c.note = std::move(note);
    return c;
}

// Exact Bayes expansion on random positive joints: a pure probability
// identity, so the residual must vanish for every joint.
inline std::vector<SuiteCheck> suite_bayes(uint64_t seed, int trials = 100) {
    double worst = 0.0;
    Rng size_rng(derive_seed(seed, 0xb0b0ULL));
    for (int i = 0; i < trials; ++i) {
        const std::array<int, 4> sizes = {size_rng.uniform_int(2, 4), size_rng.uniform_int(2, 4),
                                          size_rng.uniform_int(2, 4), size_rng.uniform_int(2, 4)};
        const TabularJointPolicy joint = random_positive_joint(sizes, derive_seed(seed, 100 + i));
        worst = std::max(worst, check_exact_bayes(joint).max_residual);
    }
    return {make_check("exact-bayes/random-joints(" + std::to_string(trials) + ")", worst, 1e-12)};
}

// Conditioned-policy decomposition: exact on balanced joints, positive and
// growing on joints that violate (A2). Emits paired (delta, residual) notes
// so the dependence on measured independence is visible.
inline std::vector<SuiteCheck> suite_lemma(const std::array<int, 4>& sizes, uint64_t seed) {
    std::vector<SuiteCheck> checks;
    for (double lambda : {0.0, 0.05, 0.1}) {
        BalancedJointSpec spec;
        spec.sizes = sizes;
        spec.lambda = lambda;
        spec.seed = seed;
        const TabularJointPolicy joint = build_balanced_joint(spec);
        const IdentityResidualReport rep = check_lemma(joint);
        char name[96];
        std::snprintf(name, sizeof name, "lemma/balanced(lambda=%.2f)", lambda);
        checks.push_back(make_check(name, rep.max_residual, 1e-12));
        if (lambda > 0.0) {
            checks.push_back(make_check("lemma/coupling-spread(lambda=" + std::to_string(lambda) + ")",
                                        coupling_spread(joint), 1e-6, true,
                                        "p(e_r|e_q,q,r) must genuinely depend on (q,r)"));
        }
    }
    double prev_residual = 0.0;
    bool monotone = true;
    for (double violation : {0.1, 0.2, 0.4}) {
        const TabularJointPolicy joint = build_a2_violating_joint(sizes, violation, seed);
        const IdentityResidualReport rep = check_lemma(joint);
        const IndependenceReport delta = tabular_delta(joint);
        char name[96], note[96];
        std::snprintf(name, sizeof name, "lemma/a2-violation(%.1f)", violation);
        std::snprintf(note, sizeof note, "paired record: delta=%.6g residual=%.6g", delta.delta,
                      rep.max_residual);
        checks.push_back(make_check(name, rep.max_residual, 1e-6, true, note));
        if (rep.max_residual < prev_residual) monotone = false;
        prev_residual = rep.max_residual;
    }
    checks.push_back(make_check("lemma/violation-monotone", monotone ? 1.0 : 0.0, 0.5, true));
    return checks;
}

namespace detail {

// Mean-zero gain profile with pairwise sign symmetry (odd moments vanish), so
// the second-order expansion of log w is accurate to O(Var^2).
inline std::vector<double> symmetric_profile(int half, double target_var, Rng& rng) {
    std::vector<double> eps;
    for (int i = 0; i < half; ++i) {
        const double z = rng.normal();
        eps.push_back(z);
        eps.push_back(-z);
    }
    const double var = stats::variance(eps);
    const double scale = var > 0.0 ? std::sqrt(target_var / var) : 0.0;
    for (double& x : eps) x *= scale;
    return eps;
}

}  // namespace detail

// Jensen lower bound on 10,000 random gain arrays and the second-order bound
// on small-variance arrays, including monotone decay across three decades.
inline std::vector<SuiteCheck> suite_bounds(uint64_t seed, int jensen_trials = 10000) {
    std::vector<SuiteCheck> checks;
    Rng rng(derive_seed(seed, 0xb0d5ULL));

    double worst_slack = 0.0;  // most negative (w - exp(mean)) seen
    for (int i = 0; i < jensen_trials; ++i) {
        const int n = rng.uniform_int(2, 24);
        std::vector<double> gains(static_cast<size_t>(n));
        for (double& g : gains) g = 2.0 * rng.normal();
        const BoundDiagnostics d = check_bounds(report_from_gains(std::move(gains)));
        worst_slack = std::min(worst_slack, d.jensen_slack);
    }
    checks.push_back(make_check("bounds/jensen(" + std::to_string(jensen_trials) + " arrays)",
                                -worst_slack, 1e-12, false, "statistic is max Jensen violation"));

    // same profiles rescaled per decade, residual must shrink monotonically
    const std::array<double, 4> decades = {1e-2, 1e-3, 1e-4, 1e-5};
    std::array<double, 4> residual{};
    for (int trial = 0; trial < 50; ++trial) {
        Rng profile_rng(derive_seed(seed, 7000 + static_cast<uint64_t>(trial)));
        std::vector<double> base = detail::symmetric_profile(8, 1.0, profile_rng);
        for (size_t d = 0; d < decades.size(); ++d) {
            std::vector<double> gains = base;
            const double scale = std::sqrt(decades[d]);
            for (double& x : gains) x *= scale;
            const BoundDiagnostics diag = check_bounds(report_from_gains(std::move(gains)));
            residual[d] = std::max(residual[d], diag.taylor_residual);
        }
    }
    checks.push_back(make_check("bounds/taylor(var=1e-2)", residual[0], 1e-4));
    bool monotone = true;
    for (size_t d = 1; d < decades.size(); ++d)
        if (residual[d] >= residual[d - 1]) monotone = false;
    checks.push_back(make_check("bounds/taylor-monotone-decades", monotone ? 1.0 : 0.0, 0.5, true));
    return checks;
}

// Theorem-level equivalence by full enumeration: conditioned objective equals
// the reweighted objective on balanced joints for arbitrary rewards.
inline std::vector<SuiteCheck> suite_equivalence(const std::array<int, 4>& sizes, uint64_t seed,
                                                 int joints = 5, int rewards = 20) {
    double worst = 0.0;
    for (int j = 0; j < joints; ++j) {
        BalancedJointSpec spec;
        spec.sizes = sizes;
        spec.seed = derive_seed(seed, 40 + static_cast<uint64_t>(j));
        const double lmax = balanced_lambda_max(spec);
        spec.lambda = std::min(0.45, 0.45 * lmax);
        const TabularJointPolicy joint = build_balanced_joint(spec);
        TabularBackend backend{&joint};
        std::vector<int> questions(static_cast<size_t>(sizes[2]));
        for (int q = 0; q < sizes[2]; ++q) questions[static_cast<size_t>(q)] = q;
        const std::vector<TabularBackend::Demo> demos = backend.all_demos();

        Rng reward_rng(derive_seed(seed, 900 + static_cast<uint64_t>(j)));
        for (int k = 0; k < rewards; ++k) {
            std::vector<int> table(static_cast<size_t>(sizes[2] * sizes[3]));
            for (int& cell : table) cell = reward_rng.uniform01() < 0.5 ? 1 : 0;
            const TabularReward reward = [&table, &sizes](int q, int r) {
                return static_cast<double>(table[static_cast<size_t>(q * sizes[3] + r)]);
            };
            worst = std::max(worst, equivalence_gap(backend, questions, demos, reward));
        }
    }
    char name[96];
    std::snprintf(name, sizeof name, "equivalence/balanced(%dx%d rewards)", joints, rewards);
    return {make_check(name, worst, 1e-12)};
}

// Monte-Carlo unbiasedness at n = 10,000 and the variance-ordering comparison
// at high coupling: the explicitly reweighted estimator must be noisier than
// the conditioned one in at least 80% of matched repetitions.
inline std::vector<SuiteCheck> suite_variance(const std::array<int, 4>& sizes_in, uint64_t seed,
                                              int repetitions = 30, long rep_n = 1000) {
    std::vector<SuiteCheck> checks;
    // two-point profile needs an even trace space and enough demonstrations
    const std::array<int, 4> sizes = {std::max(2, sizes_in[0]),
                                      std::max(4, sizes_in[1] + sizes_in[1] % 2),
                                      std::max(2, sizes_in[2]),
                                      std::max(4, sizes_in[3] + sizes_in[3] % 2)};
    BalancedJointSpec spec;
    spec.sizes = sizes;
    spec.seed = seed;
    spec.two_point_h = true;
    const double lmax = balanced_lambda_max(spec);
    spec.lambda = 0.9 * std::min(1.0, lmax);
    const TabularJointPolicy joint = build_balanced_joint(spec);
    TabularBackend backend{&joint};

    std::vector<int> questions(static_cast<size_t>(sizes[2]));
    for (int q = 0; q < sizes[2]; ++q) questions[static_cast<size_t>(q)] = q;
    // demonstrations biased toward positive coupling so the implicit weight
    // spreads instead of averaging out; gain at (q=0, r=0) sits in the +1 half
    std::vector<TabularBackend::Demo> demos;
    {
        std::vector<std::pair<double, TabularBackend::Demo>> scored;
        for (const auto& d : backend.all_demos()) scored.emplace_back(-backend.delta_e(0, 0, d), d);
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (size_t i = 0; i < std::max<size_t>(1, scored.size() / 2); ++i)
            demos.push_back(scored[i].second);
    }
    // reward the traces in the +1 half of the two-point profile
    const TabularReward reward = [&sizes](int, int r) { return r < sizes[3] / 2 ? 1.0 : 0.0; };

    const double exact = j_ic_exact(backend, questions, demos, reward).value;
    {
        Rng rng(derive_seed(seed, 0x11cULL));
        const ObjectiveEstimate ic = j_ic_mc(backend, questions, demos, reward, 10000, rng);
        checks.push_back(make_check("variance/unbiased-conditioned",
                                    std::abs(ic.value - exact), 3.0 * ic.std_error, false,
                                    "|mc - exact| within 3 standard errors"));
        Rng rng2(derive_seed(seed, 0x22cULL));
        const ObjectiveEstimate rw = j_reweighted_mc(backend, questions, demos, reward, 10000, rng2);
        checks.push_back(make_check("variance/unbiased-reweighted",
                                    std::abs(rw.value - exact), 3.0 * rw.std_error, false,
                                    "|mc - exact| within 3 standard errors"));
    }
    int reweighted_noisier = 0;
    for (int rep = 0; rep < repetitions; ++rep) {
        Rng rng_ic(derive_seed(seed, 5000 + static_cast<uint64_t>(rep)));
        Rng rng_rw(derive_seed(seed, 6000 + static_cast<uint64_t>(rep)));
        const ObjectiveEstimate ic = j_ic_mc(backend, questions, demos, reward, rep_n, rng_ic);
        const ObjectiveEstimate rw = j_reweighted_mc(backend, questions, demos, reward, rep_n, rng_rw);
        if (rw.std_error > ic.std_error) ++reweighted_noisier;
    }
    const double fraction = static_cast<double>(reweighted_noisier) / static_cast<double>(repetitions);
    checks.push_back(make_check("variance/reweighted-noisier-fraction", fraction, 0.8 - 1e-12, true,
                                std::to_string(reweighted_noisier) + "/" + std::to_string(repetitions) +
                                    " repetitions"));
    return checks;
}

// Log-linear relation between the mean gain and the log weight.
inline std::vector<SuiteCheck> suite_loglinear(uint64_t seed) {
    std::vector<SuiteCheck> checks;

    // equal per-sample variance: translated copies of one balanced-joint gain
    // profile, symmetrized and scaled to Var = 0.01
    {
        BalancedJointSpec spec;
        spec.sizes = {2, 4, 2, 4};
        spec.lambda = 0.3;
        spec.seed = seed;
        const TabularJointPolicy joint = build_balanced_joint(spec);
        TabularBackend backend{&joint};
        std::vector<double> profile;
        for (const auto& d : backend.all_demos()) profile.push_back(backend.delta_e(0, 0, d));
        const double m = stats::mean(profile);
        std::vector<double> centered;
        for (double x : profile) {
            centered.push_back(x - m);
            centered.push_back(m - x);  // symmetrize so odd moments vanish
        }
        const double var = stats::variance(centered);
        const double target_var = 0.01;
        const double scale = var > 0.0 ? std::sqrt(target_var / var) : 0.0;
        for (double& x : centered) x *= scale;

        Rng rng(derive_seed(seed, 0x10cULL));
        std::vector<std::pair<double, double>> samples;
        for (int i = 0; i < 40; ++i) {
            const double shift = rng.uniform(-1.0, 1.0);
            std::vector<double> gains = centered;
            for (double& x : gains) x += shift;
            const EvidenceGainReport rep = report_from_gains(std::move(gains));
            samples.emplace_back(rep.mean_gain, rep.log_weight);
        }
        const LogLinearFit fit = loglinear_fit(std::move(samples));
        checks.push_back(make_check("loglinear/slope-error", std::abs(fit.slope - 1.0), 1e-3));
        checks.push_back(make_check("loglinear/intercept-error",
                                    std::abs(fit.intercept - std::log1p(0.5 * target_var)), 1e-3,
                                    false, "intercept vs log(1 + Var/2)"));
    }

    // heterogeneous toy-policy rollouts: correlation must stay strong even
    // with per-sample variances drifting
    {
        const Vocab vocab = Vocab::standard();
        const PromptLayout layout(vocab);
        TaskSpec tspec;
        tspec.family = TaskFamily::ModularChain;
        tspec.count = 30;
        tspec.seed = derive_seed(seed, 0x77ULL);
        const std::vector<Task> tasks = gen_tasks(vocab, tspec);
        const DemoSplit split = build_demo_sets(tasks, 8, 6, derive_seed(seed, 0x78ULL));

        AutoregressivePolicy policy(vocab, ArConfig::standard());
        Rng ws_rng(derive_seed(seed, 0x79ULL));
        warm_start(policy, layout, split.training, 3, 0.4, ws_rng);
        set_uniform_copy_bias(policy, 1.0);  // copy bias widens the gain spread

        ArBackend backend(policy, layout);
        Rng rng(derive_seed(seed, 0x7aULL));
        std::vector<std::pair<double, double>> samples;
        for (const Task& task : split.training) {
            for (int i = 0; i < 4; ++i) {
                const Sequence trace = backend.sample_zero_shot(task.question, rng);
                if (trace.empty()) continue;
                const EvidenceGainReport rep =
                    evidence_gain(backend, task.question, trace, split.demo_set.demos);
                samples.emplace_back(rep.mean_gain, rep.log_weight);
            }
        }
        const LogLinearFit fit = loglinear_fit(std::move(samples));
        checks.push_back(make_check("loglinear/rollout-pearson", fit.pearson, 0.9, true,
                                    "n=" + std::to_string(fit.samples.size())));
    }
    return checks;
}

// Independence metric on a trained toy policy: 100 (q, r) pairs x 100 probe
// questions, threshold 5%.
inline std::vector<SuiteCheck> suite_delta(uint64_t seed, int n_pairs = 100, int n_probes = 100) {
    const Vocab vocab = Vocab::standard();
    const PromptLayout layout(vocab);
    TaskSpec tspec;
    tspec.family = TaskFamily::ModularChain;
    tspec.count = 90;
    tspec.seed = derive_seed(seed, 0x88ULL);
    const std::vector<Task> tasks = gen_tasks(vocab, tspec);

    AutoregressivePolicy policy(vocab, ArConfig::standard());
    Rng ws_rng(derive_seed(seed, 0x89ULL));
    warm_start(policy, layout, std::span(tasks).subspan(0, 50), 4, 0.4, ws_rng);

    Rng rng(derive_seed(seed, 0x8aULL));
    std::vector<std::pair<Sequence, Sequence>> pairs;
    for (int i = 0; static_cast<int>(pairs.size()) < n_pairs; ++i) {
        const Task& task = tasks[static_cast<size_t>(i) % 50];
        const Sequence trace =
            policy.sample(layout.zero_shot(task.question), 16, 1.0, rng).trace;
        if (!trace.empty()) pairs.emplace_back(task.question, trace);
    }
    std::vector<Sequence> probes;
    for (int i = 0; i < n_probes; ++i) probes.push_back(tasks[static_cast<size_t>(50 + i % 40)].question);

    const IndependenceReport rep = independence_delta(policy, layout, pairs, probes);
    char note[96];
    std::snprintf(note, sizeof note, "samples=%zu excluded=%zu", rep.sample_count, rep.excluded);
    return {make_check("delta/independence", rep.delta, rep.threshold, false, note)};
}

inline std::vector<SuiteCheck> run_suite(const std::string& suite, const std::array<int, 4>& sizes,
                                         uint64_t seed, int trials) {
    std::vector<SuiteCheck> checks;
    auto append = [&checks](std::vector<SuiteCheck> more) {
        for (auto& c : more) checks.push_back(std::move(c));
    };
    if (suite == "bayes" || suite == "all") append(suite_bayes(seed, trials));
    if (suite == "lemma" || suite == "all") append(suite_lemma(sizes, seed));
    if (suite == "bounds" || suite == "all") append(suite_bounds(seed));
    if (suite == "equivalence" || suite == "all") append(suite_equivalence(sizes, seed));
    if (suite == "variance" || suite == "all") append(suite_variance(sizes, seed));
    if (suite == "loglinear" || suite == "all") append(suite_loglinear(seed));
    if (suite == "delta" || suite == "all") append(suite_delta(seed));
    if (checks.empty()) throw ConfigError("verify: unknown suite '" + suite + "'");
    return checks;
}

}  // namespace icr
