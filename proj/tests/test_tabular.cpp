#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "icrlvr/tabular.hpp"
#include "support/oracles.hpp"

using namespace icr;

TEST_CASE("conditionals of a uniform joint are uniform over the target space") {
    const TabularJointPolicy p = uniform_joint({2, 3, 4, 2});
    CHECK_THAT(conditional_logprob(p, Segment::Trace, 1, {0, 2, 3, -1}),
               Catch::Matchers::WithinAbs(std::log(0.5), 1e-15));
    CHECK_THAT(conditional_logprob(p, Segment::DemoTrace, 2, {1, -1, -1, -1}),
               Catch::Matchers::WithinAbs(std::log(1.0 / 3.0), 1e-15));
    CHECK_THAT(conditional_logprob(p, Segment::Query, 0, {-1, -1, -1, -1}),
               Catch::Matchers::WithinAbs(std::log(0.25), 1e-15));
}

TEST_CASE("conditionals of a product joint reduce to marginals") {
    const TabularJointPolicy p = product_joint({3, 2, 3, 4}, 5);
    for (int r = 0; r < 4; ++r) {
        const double marginal = conditional_prob(p, Segment::Trace, r, kUnassigned);
        for (int eq = 0; eq < 3; ++eq)
            for (int er = 0; er < 2; ++er)
                for (int q = 0; q < 3; ++q)
                    CHECK_THAT(conditional_prob(p, Segment::Trace, r, {eq, er, q, -1}),
                               Catch::Matchers::WithinAbs(marginal, 1e-13));
    }
}

TEST_CASE("conditionals agree with the brute-force full-scan oracle") {
    const TabularJointPolicy p = random_positive_joint({3, 4, 2, 4}, 42);
    const std::vector<SegmentAssignment> givens = {
        {1, -1, -1, -1}, {1, 2, -1, -1}, {-1, 3, 1, -1}, {2, 0, 1, -1}, {-1, -1, 1, 2},
    };
    for (const auto& given : givens) {
        for (int target = 0; target < 4; ++target) {
            if (given[static_cast<size_t>(target)] >= 0) continue;
            const Segment seg = static_cast<Segment>(target);
            for (int v = 0; v < p.sizes[static_cast<size_t>(target)]; ++v) {
                const double lib = conditional_prob(p, seg, v, given);
                const double ref = oracle::brute_conditional(p, seg, v, given);
                CHECK_THAT(lib, Catch::Matchers::WithinAbs(ref, 1e-13));
            }
        }
    }
}

TEST_CASE("exponentials of conditional log-probabilities normalize to one") {
    const TabularJointPolicy p = random_positive_joint({2, 3, 3, 4}, 9);
    for (int eq = 0; eq < 2; ++eq)
        for (int q = 0; q < 3; ++q) {
            double total = 0.0;
            for (int r = 0; r < 4; ++r)
                total += std::exp(conditional_logprob(p, Segment::Trace, r, {eq, -1, q, -1}));
            CHECK_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-12));
        }
}

TEST_CASE("zero-probability conditioning events are rejected") {
    TabularJointPolicy p = uniform_joint({2, 2, 2, 2});
    // empty one (e_q, q) slice
    for (int er = 0; er < 2; ++er)
        for (int r = 0; r < 2; ++r) p.at(0, er, 1, r) = 0.0;
    double total = 0.0;
    for (double x : p.joint) total += x;
    for (double& x : p.joint) x /= total;
    p.validate();
    CHECK_THROWS_AS(conditional_prob(p, Segment::Trace, 0, {0, -1, 1, -1}), ZeroProbabilityError);
    CHECK_THROWS_AS(conditional_distribution(p, Segment::Trace, {0, 0, 1, -1}), ZeroProbabilityError);
}

TEST_CASE("joint validation rejects bad tables") {
    TabularJointPolicy p = uniform_joint({2, 2, 2, 2});
    p.joint[0] = -p.joint[0];
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = uniform_joint({2, 2, 2, 2});
    p.joint[0] *= 2.0;  // mass no longer 1
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

namespace {

// max residual of (A1) p(r|e_q,q) = p(r|q) over all cells
double a1_residual(const TabularJointPolicy& p) {
    double worst = 0.0;
    for (int eq = 0; eq < p.sizes[0]; ++eq)
        for (int q = 0; q < p.sizes[2]; ++q)
            for (int r = 0; r < p.sizes[3]; ++r)
                worst = std::max(worst, std::abs(conditional_prob(p, Segment::Trace, r, {eq, -1, q, -1}) -
                                                 conditional_prob(p, Segment::Trace, r, {-1, -1, q, -1})));
    return worst;
}

// max residual of (A2) p(e_r|q,e_q) = p(e_r|e_q)
double a2_residual(const TabularJointPolicy& p) {
    double worst = 0.0;
    for (int eq = 0; eq < p.sizes[0]; ++eq)
        for (int er = 0; er < p.sizes[1]; ++er)
            for (int q = 0; q < p.sizes[2]; ++q)
                worst = std::max(worst,
                                 std::abs(conditional_prob(p, Segment::DemoTrace, er, {eq, -1, q, -1}) -
                                          conditional_prob(p, Segment::DemoTrace, er, {eq, -1, -1, -1})));
    return worst;
}

}  // namespace

TEST_CASE("balanced joints satisfy the independence conditions exactly") {
    for (double lambda : {0.0, 0.05, 0.1}) {
        BalancedJointSpec spec;
        spec.sizes = {2, 3, 2, 3};
        spec.lambda = lambda;
        spec.seed = 1;
        const TabularJointPolicy p = build_balanced_joint(spec);
        CHECK(a1_residual(p) <= 1e-12);
        CHECK(a2_residual(p) <= 1e-12);
        if (lambda == 0.0) {
            CHECK(coupling_spread(p) <= 1e-12);  // fully factorized in (q, r)
        } else {
            CHECK(coupling_spread(p) > 1e-4);  // e_r genuinely depends on (q, r)
        }
    }
}

TEST_CASE("balanced joints reject couplings at or beyond lambda_max") {
    BalancedJointSpec spec;
    spec.sizes = {2, 3, 2, 3};
    spec.seed = 4;
    const double lmax = balanced_lambda_max(spec);
    REQUIRE(std::isfinite(lmax));
    spec.lambda = lmax * 1.01;
    CHECK_THROWS_AS(build_balanced_joint(spec), ConfigError);
    spec.lambda = -0.1;
    CHECK_THROWS_AS(build_balanced_joint(spec), ConfigError);
    spec.lambda = lmax * 0.99;
    CHECK_NOTHROW(build_balanced_joint(spec));
}

TEST_CASE("two-point profiles keep the independence conditions and need an even trace space") {
    BalancedJointSpec spec;
    spec.sizes = {2, 4, 2, 4};
    spec.lambda = 0.4;
    spec.seed = 8;
    spec.two_point_h = true;
    const TabularJointPolicy p = build_balanced_joint(spec);
    CHECK(a1_residual(p) <= 1e-12);
    CHECK(a2_residual(p) <= 1e-12);

    spec.sizes = {2, 4, 2, 3};
    CHECK_THROWS_AS(build_balanced_joint(spec), ConfigError);
}

TEST_CASE("A2-violating joints keep A1 but break A2 with growing magnitude") {
    double prev = 0.0;
    for (double violation : {0.1, 0.2, 0.4}) {
        const TabularJointPolicy p = build_a2_violating_joint({2, 3, 2, 3}, violation, 3);
        CHECK(a1_residual(p) <= 1e-12);
        const double a2 = a2_residual(p);
        CHECK(a2 > 1e-6);
        CHECK(a2 > prev);
        prev = a2;
    }
}
