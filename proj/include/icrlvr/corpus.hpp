#pragma once
// Synthetic verifiable tasks, rule-based rewards, a programmatic quality
// proxy, and demonstration / held-out set construction.
//
// Two task families over the shared vocabulary:
//   modular-chain  question [d0 + d1 + ... + ds]
//                  trace    [v1 .. vs ANS vs succ(vs) END]
//                  where v0 = d0, vi = (v_{i-1} + d_i) mod n_digits and
//                  succ(x) = (x + 1) mod n_digits is a check digit.
//   sorted-copy    question [d1 .. dn]
//                  trace    [sorted digits ANS min max END]
// Answers are always two tokens, so a lucky guess needs both right.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "icrlvr/core.hpp"
#include "icrlvr/vocab.hpp"

namespace icr {

enum class TaskFamily { ModularChain, SortedCopy };

inline std::string family_name(TaskFamily f) {
    return f == TaskFamily::ModularChain ? "modular-chain" : "sorted-copy";
}

inline std::optional<TaskFamily> family_from_name(const std::string& s) {
    if (s == "modular-chain") return TaskFamily::ModularChain;
    if (s == "sorted-copy") return TaskFamily::SortedCopy;
    return std::nullopt;
}

struct Task {
    TaskFamily family = TaskFamily::ModularChain;
    Sequence question;
    Sequence canonical;  // minimal correct derivation, ends [.. ANS a b END]
    Sequence answer;     // the two tokens the verifier checks
};

struct TaskSpec {
    TaskFamily family = TaskFamily::ModularChain;
    int operand_min = 0;
    int operand_max = 9;
    int min_steps = 1;
    int max_steps = 1;
    int count = 0;
    uint64_t seed = 1;
    int context_window = 64;  // rendered prompts must fit this many tokens
};

struct Demonstration {
    Sequence question;   // e_q
    Sequence reference;  // e_r, the canonical trace for e_q
};

struct DemoSet {
    std::vector<Demonstration> demos;
    std::string label;  // "E" or "E0"
};

struct DemoSplit {
    DemoSet demo_set;       // E
    DemoSet held_out;       // E0
    std::vector<Task> training;
};

namespace detail {

struct ParsedChain {
    std::vector<int> operands;
};

inline std::optional<ParsedChain> parse_modular_chain(const Vocab& v, const Sequence& q) {
    if (q.size() < 3 || q.size() % 2 == 0) return std::nullopt;
    ParsedChain out;
    for (size_t i = 0; i < q.size(); ++i) {
        if (i % 2 == 0) {
            if (!v.is_digit(q[i])) return std::nullopt;
            out.operands.push_back(q[i]);
        } else if (q[i] != v.plus) {
            return std::nullopt;
        }
    }
    return out;
}

inline std::optional<std::vector<int>> parse_sorted_copy(const Vocab& v, const Sequence& q) {
    if (q.empty()) return std::nullopt;
    std::vector<int> digits;
    for (Token t : q) {
        if (!v.is_digit(t)) return std::nullopt;
        digits.push_back(t);
    }
    return digits;
}

}  // namespace detail

// Rebuilds the unique minimal derivation for a well-formed question, or
// nullopt when the question parses as neither family.
inline std::optional<Task> task_from_question(const Vocab& v, const Sequence& q) {
    Task t;
    t.question = q;
    if (auto chain = detail::parse_modular_chain(v, q)) {
        t.family = TaskFamily::ModularChain;
        int value = chain->operands[0];
        for (size_t i = 1; i < chain->operands.size(); ++i) {
            value = (value + chain->operands[i]) % v.n_digits;
            t.canonical.push_back(value);
        }
        t.answer = {value, (value + 1) % v.n_digits};
    } else if (auto digits = detail::parse_sorted_copy(v, q)) {
        t.family = TaskFamily::SortedCopy;
        std::vector<int> sorted = *digits;
        std::sort(sorted.begin(), sorted.end());
        t.canonical.assign(sorted.begin(), sorted.end());
        t.answer = {sorted.front(), sorted.back()};
    } else {
        return std::nullopt;
    }
    t.canonical.push_back(v.ans);
    t.canonical.insert(t.canonical.end(), t.answer.begin(), t.answer.end());
    t.canonical.push_back(v.end);
    return t;
}

inline std::optional<Sequence> ground_truth_answer(const Vocab& v, const Sequence& q) {
    auto t = task_from_question(v, q);
    if (!t) return std::nullopt;
    return t->answer;
}

// Binary correctness reward. Never throws: malformed traces score 0.
// A trace passes iff it contains exactly one answer marker, ends with the
// single end token, and the tokens between marker and end equal the ground
// truth answer for q.
inline int verify(const Vocab& v, const Sequence& q, const Sequence& r) {
    const auto truth = ground_truth_answer(v, q);
    if (!truth) return 0;
    if (r.empty() || r.back() != v.end) return 0;
    size_t n_ans = 0, n_end = 0, ans_pos = 0;
    for (size_t i = 0; i < r.size(); ++i) {
        if (r[i] == v.ans) {
            ++n_ans;
            ans_pos = i;
        }
        if (r[i] == v.end) ++n_end;
    }
    if (n_ans != 1 || n_end != 1) return 0;
    const size_t first = ans_pos + 1;
    const size_t last = r.size() - 1;  // index of END
    if (last < first) return 0;
    if (last - first != truth->size()) return 0;
    for (size_t i = 0; i < truth->size(); ++i)
        if (r[first + i] != (*truth)[i]) return 0;
    return 1;
}

// Quality proxy over correct traces, 1..5 scale:
//   score = 5 - 4 * clamp(0.5*redundancy + 0.3*invalid + 0.2*excess, 0, 1)
// Step tokens are greedily aligned against the canonical derivation; a token
// matching the next canonical step is valid, a repeat of the last valid token
// is redundant, anything else is invalid. Excess is relative length over the
// canonical trace. Canonical traces score exactly 5.
inline double quality_proxy(const Vocab& v, const Sequence& q, const Sequence& r) {
    if (verify(v, q, r) != 1)
        throw std::invalid_argument("quality_proxy: defined only for traces with verify = 1");
    const Task canon = *task_from_question(v, q);

    auto step_region = [&v](const Sequence& s) {
        Sequence out;
        for (Token t : s) {
            if (t == v.ans) break;
            out.push_back(t);
        }
        return out;
    };
    const Sequence steps = step_region(r);
    const Sequence canon_steps = step_region(canon.canonical);

    size_t ptr = 0, redundant = 0, invalid = 0;
    Token prev_valid = -1;
    for (Token t : steps) {
        if (ptr < canon_steps.size() && t == canon_steps[ptr]) {
            ++ptr;
            prev_valid = t;
        } else if (t == prev_valid) {
            ++redundant;
        } else {
            ++invalid;
        }
    }
    const double denom = static_cast<double>(std::max<size_t>(1, steps.size()));
    const double redundancy_ratio = static_cast<double>(redundant) / denom;
    const double invalid_ratio = static_cast<double>(invalid) / denom;
    const double excess = static_cast<double>(r.size()) - static_cast<double>(canon.canonical.size());
    const double excess_ratio =
        std::min(1.0, std::max(0.0, excess) / static_cast<double>(std::max<size_t>(1, canon.canonical.size())));
    const double penalty =
        std::clamp(0.5 * redundancy_ratio + 0.3 * invalid_ratio + 0.2 * excess_ratio, 0.0, 1.0);
    return 5.0 - 4.0 * penalty;
}

namespace detail {

inline int worst_case_prompt_length(const TaskSpec& spec) {
    // conditioned layout [e_q > e_r | q > r] with both segments at max size
    const int s = spec.max_steps;
    int q_len = 0, r_len = 0;
    if (spec.family == TaskFamily::ModularChain) {
        q_len = 2 * s + 1;
        r_len = s + 4;
    } else {
        q_len = s;
        r_len = s + 4;
    }
    return 2 * q_len + 2 * r_len + 3;
}

}  // namespace detail

inline std::vector<Task> gen_tasks(const Vocab& v, const TaskSpec& spec) {
    if (spec.count < 0) throw ConfigError("gen_tasks: count must be >= 0");
    if (spec.min_steps < 1 || spec.max_steps < spec.min_steps)
        throw ConfigError("gen_tasks: trace length bounds must be positive with min <= max");
    if (spec.operand_min < 0 || spec.operand_max < spec.operand_min ||
        spec.operand_max >= v.n_digits)
        throw ConfigError("gen_tasks: operand range must lie within the digit tokens");
    if (detail::worst_case_prompt_length(spec) > spec.context_window)
        throw ConfigError("gen_tasks: trace length bounds exceed the context window");

    std::vector<Task> out;
    if (spec.count == 0) return out;

    Rng rng(derive_seed(spec.seed, 0x7a5cULL));
    std::set<Sequence> seen;
    const long max_attempts = 1000L + 200L * spec.count;
    long attempts = 0;
    while (static_cast<int>(out.size()) < spec.count) {
        if (++attempts > max_attempts)
            throw ConfigError("gen_tasks: could not generate enough distinct questions; "
                              "widen the operand range or step bounds");
        const int steps = rng.uniform_int(spec.min_steps, spec.max_steps);
        Sequence q;
        if (spec.family == TaskFamily::ModularChain) {
            q.push_back(rng.uniform_int(spec.operand_min, spec.operand_max));
            for (int i = 0; i < steps; ++i) {
                q.push_back(v.plus);
                q.push_back(rng.uniform_int(spec.operand_min, spec.operand_max));
            }
        } else {
            for (int i = 0; i < steps; ++i) q.push_back(rng.uniform_int(spec.operand_min, spec.operand_max));
        }
        if (!seen.insert(q).second) continue;
        out.push_back(*task_from_question(v, q));
    }
    return out;
}

// Injects redundancy and invalid steps into the reference trace while leaving
// the answer suffix untouched, so the degraded demonstration still verifies.
inline Demonstration degrade_demo(const Vocab& v, const Demonstration& d, double level, uint64_t seed) {
    if (level < 0.0 || level > 1.0) throw std::invalid_argument("degrade_demo: level must be in [0, 1]");
    if (level == 0.0) return d;

    size_t ans_pos = d.reference.size();
    for (size_t i = 0; i < d.reference.size(); ++i)
        if (d.reference[i] == v.ans) {
            ans_pos = i;
            break;
        }
    Sequence steps(d.reference.begin(), d.reference.begin() + static_cast<long>(ans_pos));
    const Sequence suffix(d.reference.begin() + static_cast<long>(ans_pos), d.reference.end());

    Rng rng(derive_seed(seed, 0xde64ULL));
    const int max_inject = static_cast<int>(steps.size()) + 2;
    int n_inject = static_cast<int>(std::lround(level * max_inject));
    if (n_inject < 1) n_inject = 1;

    for (int i = 0; i < n_inject; ++i) {
        const size_t pos = steps.empty() ? 0 : static_cast<size_t>(rng.uniform_int(0, static_cast<int>(steps.size()) - 1));
        if (!steps.empty() && rng.uniform01() < 0.5) {
            steps.insert(steps.begin() + static_cast<long>(pos) + 1, steps[pos]);  // duplicate a step
        } else {
            const Token junk = rng.uniform_int(0, v.n_digits - 1);  // spurious intermediate value
            steps.insert(steps.begin() + static_cast<long>(pos), junk);
        }
    }
    Demonstration out;
    out.question = d.question;
    out.reference = concat(steps, suffix);
    return out;
}

// Partitions tasks into the demonstration set E, held-out set E0, and the
// remaining training split. Questions must be pairwise distinct.
inline DemoSplit build_demo_sets(const std::vector<Task>& tasks, int n_e, int n_e0, uint64_t seed) {
    if (n_e < 1) throw ConfigError("build_demo_sets: E must be non-empty");
    if (n_e0 < 1) throw ConfigError("build_demo_sets: E0 must be non-empty");
    if (n_e + n_e0 > static_cast<int>(tasks.size()))
        throw ConfigError("build_demo_sets: not enough tasks for the requested split");
    {
        std::set<Sequence> qs;
        for (const Task& t : tasks)
            if (!qs.insert(t.question).second)
                throw ConfigError("build_demo_sets: duplicate questions break split disjointness");
    }
    std::vector<size_t> order(tasks.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, 0x5e75ULL));
    rng.shuffle(order);

    DemoSplit split;
    split.demo_set.label = "E";
    split.held_out.label = "E0";
    for (int i = 0; i < n_e; ++i) {
        const Task& t = tasks[order[static_cast<size_t>(i)]];
        split.demo_set.demos.push_back({t.question, t.canonical});
    }
    for (int i = n_e; i < n_e + n_e0; ++i) {
        const Task& t = tasks[order[static_cast<size_t>(i)]];
        split.held_out.demos.push_back({t.question, t.canonical});
    }
    for (size_t i = static_cast<size_t>(n_e + n_e0); i < order.size(); ++i)
        split.training.push_back(tasks[order[i]]);
    return split;
}

}  // namespace icr
