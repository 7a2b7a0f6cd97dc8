#pragma once
// Exact tabular joint policy over (e_q, e_r, q, r). Every conditional is
// computed by explicit marginalization of the joint table, so probability
// identities can be checked to machine precision.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "icrlvr/core.hpp"

namespace icr {

enum class Segment : int { DemoQuestion = 0, DemoTrace = 1, Query = 2, Trace = 3 };

constexpr std::array<Segment, 4> kAllSegments = {Segment::DemoQuestion, Segment::DemoTrace,
                                                 Segment::Query, Segment::Trace};

// Partial assignment over the four segments; -1 marks "unassigned".
using SegmentAssignment = std::array<int, 4>;

inline constexpr SegmentAssignment kUnassigned = {-1, -1, -1, -1};

struct TabularJointPolicy {
    std::array<int, 4> sizes = {0, 0, 0, 0};
    std::vector<double> joint;  // row-major over (e_q, e_r, q, r)

    size_t index(int eq, int er, int q, int r) const {
        return ((static_cast<size_t>(eq) * sizes[1] + er) * sizes[2] + q) * sizes[3] + r;
    }

    double at(int eq, int er, int q, int r) const { return joint[index(eq, er, q, r)]; }
    double& at(int eq, int er, int q, int r) { return joint[index(eq, er, q, r)]; }

    size_t total_cells() const {
        return static_cast<size_t>(sizes[0]) * sizes[1] * sizes[2] * sizes[3];
    }

    void validate() const {
        for (int s : sizes)
            if (s < 1) throw ConfigError("TabularJointPolicy: all segment sizes must be >= 1");
        if (joint.size() != total_cells()) throw ConfigError("TabularJointPolicy: table size mismatch");
        double total = 0.0;
        for (double p : joint) {
            if (p < 0.0 || !std::isfinite(p))
                throw ConfigError("TabularJointPolicy: entries must be finite and non-negative");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw ConfigError("TabularJointPolicy: joint mass must be 1 within 1e-12");
    }

    // Sum of the joint over all cells consistent with the partial assignment.
    double mass(const SegmentAssignment& given) const {
        const int lo0 = given[0] < 0 ? 0 : given[0], hi0 = given[0] < 0 ? sizes[0] : given[0] + 1;
        const int lo1 = given[1] < 0 ? 0 : given[1], hi1 = given[1] < 0 ? sizes[1] : given[1] + 1;
        const int lo2 = given[2] < 0 ? 0 : given[2], hi2 = given[2] < 0 ? sizes[2] : given[2] + 1;
        const int lo3 = given[3] < 0 ? 0 : given[3], hi3 = given[3] < 0 ? sizes[3] : given[3] + 1;
        double acc = 0.0;
        for (int a = lo0; a < hi0; ++a)
            for (int b = lo1; b < hi1; ++b)
                for (int c = lo2; c < hi2; ++c)
                    for (int d = lo3; d < hi3; ++d) acc += at(a, b, c, d);
        return acc;
    }
};

inline void check_in_range(const TabularJointPolicy& p, const SegmentAssignment& a) {
    for (int s = 0; s < 4; ++s)
        if (a[s] >= p.sizes[s]) throw std::out_of_range("segment assignment out of range");
}

// p(target = value | given), linear scale. `given` may assign any subset of
// the other segments; unassigned ones are marginalized out.
inline double conditional_prob(const TabularJointPolicy& p, Segment target, int value,
                               const SegmentAssignment& given) {
    const int t = static_cast<int>(target);
    if (given[t] >= 0) throw std::invalid_argument("conditional_prob: target segment is assigned");
    check_in_range(p, given);
    if (value < 0 || value >= p.sizes[t]) throw std::out_of_range("conditional_prob: target value");
    const double denom = p.mass(given);
    if (denom <= 0.0) throw ZeroProbabilityError("conditional_prob: conditioning event has zero mass");
    SegmentAssignment numer_a = given;
    numer_a[t] = value;
    return p.mass(numer_a) / denom;
}

// log p(target = value | given).
inline double conditional_logprob(const TabularJointPolicy& p, Segment target, int value,
                                  const SegmentAssignment& given) {
    const double prob = conditional_prob(p, target, value, given);
    if (prob <= 0.0) throw ZeroProbabilityError("conditional_logprob: target value has zero mass");
    return std::log(prob);
}

// Full conditional distribution over the target space.
inline std::vector<double> conditional_distribution(const TabularJointPolicy& p, Segment target,
                                                    const SegmentAssignment& given) {
    const int t = static_cast<int>(target);
    if (given[t] >= 0) throw std::invalid_argument("conditional_distribution: target segment is assigned");
    check_in_range(p, given);
    const double denom = p.mass(given);
    if (denom <= 0.0)
        throw ZeroProbabilityError("conditional_distribution: conditioning event has zero mass");
    std::vector<double> out(static_cast<size_t>(p.sizes[t]));
    SegmentAssignment numer_a = given;
    for (int v = 0; v < p.sizes[t]; ++v) {
        numer_a[t] = v;
        out[static_cast<size_t>(v)] = p.mass(numer_a) / denom;
    }
    return out;
}

inline int sample_conditional(const TabularJointPolicy& p, Segment target,
                              const SegmentAssignment& given, Rng& rng) {
    const std::vector<double> dist = conditional_distribution(p, target, given);
    return static_cast<int>(rng.categorical(dist));
}

// Random strictly positive joint, entries in [0.1, 1] before normalization.
inline TabularJointPolicy random_positive_joint(const std::array<int, 4>& sizes, uint64_t seed) {
    TabularJointPolicy p;
    p.sizes = sizes;
    p.joint.resize(p.total_cells());
    Rng rng(derive_seed(seed, 0xabcdULL));
    double total = 0.0;
    for (double& cell : p.joint) {
        cell = rng.uniform(0.1, 1.0);
        total += cell;
    }
    for (double& cell : p.joint) cell /= total;
    p.validate();
    return p;
}

// Constructive recipe for a joint satisfying the independence conditions
//   (A1)  p(r | e_q, q)   = p(r | q)
//   (A2)  p(e_r | q, e_q) = p(e_r | e_q)
// exactly, while p(e_r | e_q, q, r) still depends on (q, r) whenever
// lambda > 0:
//   p(e_q, e_r, q, r) = p(e_q) p(q) p(r|q) b(e_r|e_q) (1 + lambda g(e_q,e_r) h(q,r))
// with g centered under b per e_q and h centered under p(r|q) per q. Both g
// and h are scaled to unit max-abs, so lambda_max >= 1.
struct BalancedJointSpec {
    std::array<int, 4> sizes = {2, 3, 2, 3};
    double lambda = 0.0;
    uint64_t seed = 1;
    // When set, h(q, r) takes only values {-1, +1} and p(r|q) gives both signs
    // equal mass, so the per-(q,r) gain profiles share one magnitude scale.
    bool two_point_h = false;
};

namespace detail {

struct BalancedTables {
    std::vector<double> p_eq;    // [eq]
    std::vector<double> p_q;     // [q]
    std::vector<double> p_r_q;   // [q][r]
    std::vector<double> b;       // [eq][er]
    std::vector<double> g;       // [eq][er], centered under b per eq, max-abs 1
    std::vector<double> h;       // [q][r],  centered under p(r|q) per q, max-abs 1
};

inline BalancedTables balanced_tables(const BalancedJointSpec& spec) {
    const int nEq = spec.sizes[0], nEr = spec.sizes[1], nQ = spec.sizes[2], nR = spec.sizes[3];
    for (int s : spec.sizes)
        if (s < 1) throw ConfigError("BalancedJointSpec: sizes must be >= 1");
    if (spec.two_point_h && nR % 2 != 0)
        throw ConfigError("BalancedJointSpec: two_point_h requires an even trace space");
    Rng rng(derive_seed(spec.seed, 0xba1aULL));
    BalancedTables t;

    auto random_simplex = [&rng](int n) {
        std::vector<double> v(static_cast<size_t>(n));
        double total = 0.0;
        for (double& x : v) {
            x = rng.uniform(0.2, 1.0);
            total += x;
        }
        for (double& x : v) x /= total;
        return v;
    };

    t.p_eq = random_simplex(nEq);
    t.p_q = random_simplex(nQ);

    t.p_r_q.resize(static_cast<size_t>(nQ) * nR);
    for (int q = 0; q < nQ; ++q) {
        std::vector<double> row = random_simplex(nR);
        if (spec.two_point_h && nR >= 2) {
            // equal mass on the +1 half (r < nR/2) and the -1 half
            double plus = 0.0, minus = 0.0;
            for (int r = 0; r < nR; ++r) (r < nR / 2 ? plus : minus) += row[static_cast<size_t>(r)];
            for (int r = 0; r < nR; ++r)
                row[static_cast<size_t>(r)] *= 0.5 / (r < nR / 2 ? plus : minus);
        }
        for (int r = 0; r < nR; ++r) t.p_r_q[static_cast<size_t>(q) * nR + r] = row[static_cast<size_t>(r)];
    }

    t.b.resize(static_cast<size_t>(nEq) * nEr);
    for (int eq = 0; eq < nEq; ++eq) {
        const std::vector<double> row = random_simplex(nEr);
        for (int er = 0; er < nEr; ++er) t.b[static_cast<size_t>(eq) * nEr + er] = row[static_cast<size_t>(er)];
    }

    // g: centered under b(.|e_q) for each e_q, then scaled to unit max-abs.
    t.g.assign(static_cast<size_t>(nEq) * nEr, 0.0);
    if (nEr >= 2) {
        for (int eq = 0; eq < nEq; ++eq) {
            double wmean = 0.0;
            for (int er = 0; er < nEr; ++er) {
                t.g[static_cast<size_t>(eq) * nEr + er] = rng.uniform(-1.0, 1.0);
                wmean += t.b[static_cast<size_t>(eq) * nEr + er] * t.g[static_cast<size_t>(eq) * nEr + er];
            }
            for (int er = 0; er < nEr; ++er) t.g[static_cast<size_t>(eq) * nEr + er] -= wmean;
        }
        double gmax = 0.0;
        for (double x : t.g) gmax = std::max(gmax, std::abs(x));
        if (gmax > 0.0)
            for (double& x : t.g) x /= gmax;
    }

    // h: centered under p(.|q) for each q, unit max-abs (or exactly +/-1).
    t.h.assign(static_cast<size_t>(nQ) * nR, 0.0);
    if (nR >= 2) {
        if (spec.two_point_h) {
            for (int q = 0; q < nQ; ++q)
                for (int r = 0; r < nR; ++r)
                    t.h[static_cast<size_t>(q) * nR + r] = (r < nR / 2) ? 1.0 : -1.0;
        } else {
            for (int q = 0; q < nQ; ++q) {
                double wmean = 0.0;
                for (int r = 0; r < nR; ++r) {
                    t.h[static_cast<size_t>(q) * nR + r] = rng.uniform(-1.0, 1.0);
                    wmean += t.p_r_q[static_cast<size_t>(q) * nR + r] * t.h[static_cast<size_t>(q) * nR + r];
                }
                for (int r = 0; r < nR; ++r) t.h[static_cast<size_t>(q) * nR + r] -= wmean;
            }
            double hmax = 0.0;
            for (double x : t.h) hmax = std::max(hmax, std::abs(x));
            if (hmax > 0.0)
                for (double& x : t.h) x /= hmax;
        }
    }
    return t;
}

}  // namespace detail

// Largest coupling the base tables admit before some joint cell goes
// non-positive. Infinite when no (g*h) product is negative.
inline double balanced_lambda_max(const BalancedJointSpec& spec) {
    const detail::BalancedTables t = detail::balanced_tables(spec);
    const int nEq = spec.sizes[0], nEr = spec.sizes[1], nQ = spec.sizes[2], nR = spec.sizes[3];
    double worst = 0.0;
    for (int eq = 0; eq < nEq; ++eq)
        for (int er = 0; er < nEr; ++er)
            for (int q = 0; q < nQ; ++q)
                for (int r = 0; r < nR; ++r) {
                    const double prod = t.g[static_cast<size_t>(eq) * nEr + er] *
                                        t.h[static_cast<size_t>(q) * nR + r];
                    worst = std::max(worst, -prod);
                }
    if (worst <= 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / worst;
}

inline TabularJointPolicy build_balanced_joint(const BalancedJointSpec& spec) {
    if (spec.lambda < 0.0) throw ConfigError("build_balanced_joint: lambda must be >= 0");
    const double lmax = balanced_lambda_max(spec);
    if (spec.lambda >= lmax)
        throw ConfigError("build_balanced_joint: lambda >= lambda_max would create non-positive cells");
    const detail::BalancedTables t = detail::balanced_tables(spec);
    const int nEq = spec.sizes[0], nEr = spec.sizes[1], nQ = spec.sizes[2], nR = spec.sizes[3];

    TabularJointPolicy p;
    p.sizes = spec.sizes;
    p.joint.resize(p.total_cells());
    for (int eq = 0; eq < nEq; ++eq)
        for (int er = 0; er < nEr; ++er)
            for (int q = 0; q < nQ; ++q)
                for (int r = 0; r < nR; ++r) {
                    const double coupling = 1.0 + spec.lambda *
                                                      t.g[static_cast<size_t>(eq) * nEr + er] *
                                                      t.h[static_cast<size_t>(q) * nR + r];
                    p.at(eq, er, q, r) = t.p_eq[static_cast<size_t>(eq)] * t.p_q[static_cast<size_t>(q)] *
                                         t.p_r_q[static_cast<size_t>(q) * nR + r] *
                                         t.b[static_cast<size_t>(eq) * nEr + er] * coupling;
                }
    // The construction normalizes analytically; renormalize to absorb rounding.
    double total = 0.0;
    for (double x : p.joint) total += x;
    for (double& x : p.joint) x /= total;
    p.validate();
    return p;
}

// Fully factorized joint p(e_q) p(e_r) p(q) p(r).
inline TabularJointPolicy product_joint(const std::array<int, 4>& sizes, uint64_t seed) {
    Rng rng(derive_seed(seed, 0xfac7ULL));
    std::array<std::vector<double>, 4> marginals;
    for (int s = 0; s < 4; ++s) {
        marginals[s].resize(static_cast<size_t>(sizes[static_cast<size_t>(s)]));
        double total = 0.0;
        for (double& x : marginals[static_cast<size_t>(s)]) {
            x = rng.uniform(0.2, 1.0);
            total += x;
        }
        for (double& x : marginals[static_cast<size_t>(s)]) x /= total;
    }
    TabularJointPolicy p;
    p.sizes = sizes;
    p.joint.resize(p.total_cells());
    for (int eq = 0; eq < sizes[0]; ++eq)
        for (int er = 0; er < sizes[1]; ++er)
            for (int q = 0; q < sizes[2]; ++q)
                for (int r = 0; r < sizes[3]; ++r)
                    p.at(eq, er, q, r) = marginals[0][static_cast<size_t>(eq)] * marginals[1][static_cast<size_t>(er)] *
                                         marginals[2][static_cast<size_t>(q)] * marginals[3][static_cast<size_t>(r)];
    p.validate();
    return p;
}

inline TabularJointPolicy uniform_joint(const std::array<int, 4>& sizes) {
    TabularJointPolicy p;
    p.sizes = sizes;
    p.joint.assign(p.total_cells(), 0.0);
    const double v = 1.0 / static_cast<double>(p.total_cells());
    for (double& x : p.joint) x = v;
    p.validate();
    return p;
}

// Starts from a balanced base (lambda = 0) and multiplies in a factor
// (1 + violation * u(e_r) s(q)), u non-centered. This makes the e_r marginal
// depend on q — breaking (A2) — while (A1) survives because the factor does
// not involve r. `violation` in [0, 1).
inline TabularJointPolicy build_a2_violating_joint(const std::array<int, 4>& sizes, double violation,
                                                   uint64_t seed) {
    if (violation < 0.0 || violation >= 1.0)
        throw ConfigError("build_a2_violating_joint: violation must be in [0, 1)");
    BalancedJointSpec base;
    base.sizes = sizes;
    base.lambda = 0.0;
    base.seed = seed;
    TabularJointPolicy p = build_balanced_joint(base);

    Rng rng(derive_seed(seed, 0xa2a2ULL));
    std::vector<double> u(static_cast<size_t>(sizes[1]));
    std::vector<double> s(static_cast<size_t>(sizes[2]));
    for (double& x : u) x = rng.uniform(-1.0, 1.0);
    for (double& x : s) x = rng.uniform(-1.0, 1.0);

    for (int eq = 0; eq < sizes[0]; ++eq)
        for (int er = 0; er < sizes[1]; ++er)
            for (int q = 0; q < sizes[2]; ++q)
                for (int r = 0; r < sizes[3]; ++r)
                    p.at(eq, er, q, r) *= 1.0 + violation * u[static_cast<size_t>(er)] * s[static_cast<size_t>(q)];
    double total = 0.0;
    for (double x : p.joint) total += x;
    for (double& x : p.joint) x /= total;
    p.validate();
    return p;
}

// Largest variation of p(e_r | e_q, q, r) across (q, r), maximized over
// (e_q, e_r). Zero for factorized joints; grows with the coupling strength.
inline double coupling_spread(const TabularJointPolicy& p) {
    double spread = 0.0;
    for (int eq = 0; eq < p.sizes[0]; ++eq)
        for (int er = 0; er < p.sizes[1]; ++er) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -std::numeric_limits<double>::infinity();
            for (int q = 0; q < p.sizes[2]; ++q)
                for (int r = 0; r < p.sizes[3]; ++r) {
                    SegmentAssignment given = {eq, -1, q, r};
                    const double val = conditional_prob(p, Segment::DemoTrace, er, given);
                    lo = std::min(lo, val);
                    hi = std::max(hi, val);
                }
            spread = std::max(spread, hi - lo);
        }
    return spread;
}

}  // namespace icr
