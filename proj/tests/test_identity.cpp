#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "icrlvr/corpus.hpp"
#include "icrlvr/identity.hpp"
#include "support/oracles.hpp"

using namespace icr;

TEST_CASE("the exact Bayes expansion vanishes on a uniform joint") {
    const IdentityResidualReport rep = check_exact_bayes(uniform_joint({3, 3, 3, 3}));
    CHECK(rep.max_residual <= 1e-15);
    CHECK(rep.tuples == 81);
}

TEST_CASE("the exact Bayes expansion vanishes on arbitrary positive joints") {
    // spot-check one joint against the brute-force conditional oracle, then
    // sweep many joints as a property
    const TabularJointPolicy p = random_positive_joint({3, 3, 3, 3}, 17);
    for (int eq = 0; eq < 3; ++eq)
        for (int er = 0; er < 3; ++er)
            for (int q = 0; q < 3; ++q)
                for (int r = 0; r < 3; ++r) {
                    const double lhs = oracle::brute_conditional(p, Segment::Trace, r, {eq, er, q, -1});
                    const double rhs =
                        oracle::brute_conditional(p, Segment::Trace, r, {eq, -1, q, -1}) *
                        oracle::brute_conditional(p, Segment::DemoTrace, er, {eq, -1, q, r}) /
                        oracle::brute_conditional(p, Segment::DemoTrace, er, {eq, -1, q, -1});
                    CHECK_THAT(lhs, Catch::Matchers::WithinAbs(rhs, 1e-12));
                }
    CHECK(check_exact_bayes(p).max_residual <= 1e-12);

    Rng size_rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const std::array<int, 4> sizes = {size_rng.uniform_int(2, 4), size_rng.uniform_int(2, 4),
                                          size_rng.uniform_int(2, 4), size_rng.uniform_int(2, 4)};
        const TabularJointPolicy joint = random_positive_joint(sizes, 1000 + static_cast<uint64_t>(trial));
        CHECK(check_exact_bayes(joint).max_residual <= 1e-12);
    }
}

TEST_CASE("the exact Bayes expansion vanishes on balanced joints") {
    BalancedJointSpec spec;
    spec.sizes = {2, 3, 2, 3};
    spec.lambda = 0.1;
    spec.seed = 1;
    CHECK(check_exact_bayes(build_balanced_joint(spec)).max_residual <= 1e-12);
}

TEST_CASE("the decomposition holds exactly on balanced joints for any admissible coupling") {
    for (double lambda : {0.0, 0.05, 0.1, 0.4}) {
        BalancedJointSpec spec;
        spec.sizes = {2, 3, 2, 3};
        spec.lambda = lambda;
        spec.seed = 2;
        const TabularJointPolicy joint = build_balanced_joint(spec);
        const IdentityResidualReport rep = check_lemma(joint);
        CHECK(rep.max_residual <= 1e-12);
    }
}

TEST_CASE("on factorized joints the conditioned policy equals the base policy") {
    const TabularJointPolicy p = product_joint({2, 3, 2, 3}, 5);
    CHECK(check_lemma(p).max_residual <= 1e-12);
    for (int eq = 0; eq < 2; ++eq)
        for (int er = 0; er < 3; ++er)
            for (int q = 0; q < 2; ++q)
                for (int r = 0; r < 3; ++r)
                    CHECK_THAT(conditional_prob(p, Segment::Trace, r, {eq, er, q, -1}),
                               Catch::Matchers::WithinAbs(
                                   conditional_prob(p, Segment::Trace, r, {-1, -1, q, -1}), 1e-13));
}

TEST_CASE("violating the independence condition breaks the decomposition monotonically") {
    double prev_residual = 0.0;
    double prev_delta = 0.0;
    for (double violation : {0.1, 0.2, 0.4}) {
        const TabularJointPolicy joint = build_a2_violating_joint({2, 3, 2, 3}, violation, 3);
        const IdentityResidualReport rep = check_lemma(joint);
        const IndependenceReport delta = tabular_delta(joint);
        CHECK(rep.max_residual > 0.0);
        CHECK(rep.max_residual > prev_residual);
        // the paired record: residual grows alongside the measured dependence
        CHECK(delta.delta >= prev_delta);
        prev_residual = rep.max_residual;
        prev_delta = delta.delta;
        // the unconditional identity is immune to the violation
        CHECK(check_exact_bayes(joint).max_residual <= 1e-12);
    }
    CHECK(prev_residual > 1e-6);
}

namespace {

// order-3 policy with no global features: everything farther back than the
// question is invisible, so prepending a probe cannot move any logit
AutoregressivePolicy local_window_policy(const Vocab& vocab, uint64_t seed) {
    ArConfig cfg;
    cfg.window = 48;
    cfg.order = 3;
    cfg.pairs = {{1, 2}};
    cfg.role_features = false;
    cfg.bag_feature = false;
    AutoregressivePolicy p(vocab, cfg);
    Rng rng(seed);
    for (double& x : p.theta()) x = 0.5 * rng.normal();
    return p;
}

}  // namespace

TEST_CASE("delta is exactly zero when context features cannot reach the probe") {
    const Vocab vocab = Vocab::standard();
    const PromptLayout layout(vocab);
    const AutoregressivePolicy policy = local_window_policy(vocab, 12);

    std::vector<std::pair<Sequence, Sequence>> pairs;
    std::vector<Sequence> probes;
    Rng rng(5);
    for (int i = 0; i < 6; ++i) {
        // questions of length 3 >= order: the probe region stays out of reach
        const Sequence q = {rng.uniform_int(0, 9), vocab.plus, rng.uniform_int(0, 9)};
        const Sequence trace = policy.sample(layout.zero_shot(q), 8, 1.0, rng).trace;
        if (!trace.empty()) pairs.emplace_back(q, trace);
        probes.push_back({rng.uniform_int(0, 9), vocab.plus, rng.uniform_int(0, 9)});
    }
    const IndependenceReport rep = independence_delta(policy, layout, pairs, probes);
    CHECK(rep.delta == 0.0);
    CHECK(rep.pass());
    CHECK(rep.sample_count == pairs.size() * probes.size());
}

TEST_CASE("delta sees global features when they are enabled") {
    const Vocab vocab = Vocab::standard();
    const PromptLayout layout(vocab);
    ArConfig cfg = ArConfig::standard();
    AutoregressivePolicy policy(vocab, cfg);
    Rng init(3);
    for (double& x : policy.theta()) x = 0.3 * init.normal();

    Rng rng(8);
    std::vector<std::pair<Sequence, Sequence>> pairs;
    std::vector<Sequence> probes;
    for (int i = 0; i < 5; ++i) {
        const Sequence q = {rng.uniform_int(0, 9), vocab.plus, rng.uniform_int(0, 9)};
        const Sequence trace = policy.sample(layout.zero_shot(q), 8, 1.0, rng).trace;
        if (!trace.empty()) pairs.emplace_back(q, trace);
        probes.push_back({rng.uniform_int(0, 9), vocab.plus, rng.uniform_int(0, 9)});
    }
    const IndependenceReport rep = independence_delta(policy, layout, pairs, probes);
    CHECK(rep.delta > 0.0);
}

TEST_CASE("delta is invariant under probe reordering") {
    const Vocab vocab = Vocab::standard();
    const PromptLayout layout(vocab);
    ArConfig cfg = ArConfig::standard();
    AutoregressivePolicy policy(vocab, cfg);
    Rng init(4);
    for (double& x : policy.theta()) x = 0.3 * init.normal();

    Rng rng(9);
    std::vector<std::pair<Sequence, Sequence>> pairs;
    std::vector<Sequence> probes;
    for (int i = 0; i < 4; ++i) {
        const Sequence q = {rng.uniform_int(0, 9), vocab.plus, rng.uniform_int(0, 9)};
        const Sequence trace = policy.sample(layout.zero_shot(q), 8, 1.0, rng).trace;
        if (!trace.empty()) pairs.emplace_back(q, trace);
        probes.push_back({rng.uniform_int(0, 9), vocab.plus, rng.uniform_int(0, 9)});
    }
    const double fwd = independence_delta(policy, layout, pairs, probes).delta;
    std::reverse(probes.begin(), probes.end());
    const double rev = independence_delta(policy, layout, pairs, probes).delta;
    CHECK_THAT(fwd, Catch::Matchers::WithinAbs(rev, 1e-15));
}

TEST_CASE("near-certain traces are excluded from delta and counted") {
    const Vocab vocab = Vocab::tiny(4);
    const PromptLayout layout(vocab);
    ArConfig cfg;
    cfg.window = 32;
    cfg.order = 2;
    cfg.pairs = {};
    AutoregressivePolicy policy(vocab, cfg);
    // saturate the end token: pi(end) ~ 1 - 1e-26, so |log pi| < 1e-6
    for (Token t = 0; t < vocab.size; ++t)
        policy.theta()[policy.bias_index(t)] = (t == vocab.end) ? 30.0 : -30.0;

    const std::vector<std::pair<Sequence, Sequence>> pairs = {{Sequence{0, 1}, Sequence{vocab.end}}};
    const std::vector<Sequence> probes = {Sequence{2}, Sequence{3}};
    const IndependenceReport rep = independence_delta(policy, layout, pairs, probes);
    CHECK(rep.sample_count == 0);
    CHECK(rep.excluded == 2);
    CHECK(rep.delta == 0.0);
}

TEST_CASE("independence_delta validates its inputs") {
    const Vocab vocab = Vocab::standard();
    const PromptLayout layout(vocab);
    const AutoregressivePolicy policy(vocab, ArConfig::standard());
    const std::vector<std::pair<Sequence, Sequence>> pairs;
    const std::vector<Sequence> probes = {Sequence{1}};
    CHECK_THROWS_AS(independence_delta(policy, layout, pairs, probes), std::invalid_argument);
}
