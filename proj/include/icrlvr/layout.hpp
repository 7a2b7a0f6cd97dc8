#pragma once
// Prompt renderings for the four conditionals the evidence computation needs,
// plus the probe rendering used by the independence check.
//
//   zero-shot    [q >] r                  pi(r | q)
//   conditioned  [e_q > e_r | q >] r      pi(r | e, q)
//   probe        [q > r | e_q >] e_r      pi(e_r | q, r, e_q)
//   bare         [e_q >] e_r              pi(e_r | e_q)
//   prepended    [q' | q >] r             pi(r | q', q)
//
// '>' is the trace separator ("answer follows"), '|' the demo separator
// ("new problem follows"). Corpus sequences never contain separators, so each
// rendering splits back into its segments unambiguously.

#include <optional>
#include <vector>

#include "icrlvr/core.hpp"
#include "icrlvr/vocab.hpp"

namespace icr {

struct PromptLayout {
    const Vocab* vocab = nullptr;

    explicit PromptLayout(const Vocab& v) : vocab(&v) {}

    Sequence zero_shot(const Sequence& q) const {
        Sequence out = q;
        out.push_back(vocab->tsep);
        return out;
    }

    Sequence conditioned(const Sequence& eq, const Sequence& er, const Sequence& q) const {
        Sequence out = eq;
        out.push_back(vocab->tsep);
        out.insert(out.end(), er.begin(), er.end());
        out.push_back(vocab->dsep);
        out.insert(out.end(), q.begin(), q.end());
        out.push_back(vocab->tsep);
        return out;
    }

    Sequence probe(const Sequence& q, const Sequence& r, const Sequence& eq) const {
        return conditioned(q, r, eq);  // same shape, roles swapped: (q, r) is the demo
    }

    Sequence bare(const Sequence& eq) const { return zero_shot(eq); }

    Sequence prepended(const Sequence& q_prime, const Sequence& q) const {
        Sequence out = q_prime;
        out.push_back(vocab->dsep);
        out.insert(out.end(), q.begin(), q.end());
        out.push_back(vocab->tsep);
        return out;
    }

    // Splits a rendered context back into separator-free segments; nullopt if
    // the context does not end with a trace separator.
    std::optional<std::vector<Sequence>> split(const Sequence& rendered) const {
        if (rendered.empty() || rendered.back() != vocab->tsep) return std::nullopt;
        std::vector<Sequence> segments(1);
        for (size_t i = 0; i + 1 < rendered.size(); ++i) {
            const Token t = rendered[i];
            if (t == vocab->tsep || t == vocab->dsep) {
                segments.emplace_back();
            } else {
                segments.back().push_back(t);
            }
        }
        return segments;
    }

    // True iff the context is exactly the zero-shot rendering of q: no demo
    // separator, no demonstration tokens, a single trailing trace separator.
    bool is_zero_shot_context(const Sequence& rendered, const Sequence& q) const {
        if (rendered != zero_shot(q)) return false;
        int n_tsep = 0;
        for (Token t : rendered) {
            if (t == vocab->dsep) return false;
            if (t == vocab->tsep) ++n_tsep;
        }
        return n_tsep == 1;
    }
};

}  // namespace icr
