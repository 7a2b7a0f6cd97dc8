#pragma once
// Token vocabulary: ids, roles, and the handful of special tokens every
// sequence format relies on.

#include <stdexcept>
#include <string>
#include <vector>

#include "icrlvr/core.hpp"

namespace icr {

enum class TokenRole { Digit, Operator, Separator, AnswerMarker, End };

// Fixed id scheme:
//   0..9   digit tokens
//   10     '+'  (chain operator)
//   11     trace separator "answer follows"
//   12     demo separator "new problem follows"
//   13     answer marker
//   14     end of trace
//   15     padding / begin-of-context
struct Vocab {
    int size = 0;
    std::vector<TokenRole> roles;

    int n_digits = 0;
    Token plus = -1;
    Token tsep = -1;
    Token dsep = -1;
    Token ans = -1;
    Token end = -1;
    Token bos = -1;

    static Vocab standard() {
        Vocab v;
        v.n_digits = 10;
        v.size = 16;
        v.roles.assign(static_cast<size_t>(v.size), TokenRole::Digit);
        v.plus = 10;
        v.tsep = 11;
        v.dsep = 12;
        v.ans = 13;
        v.end = 14;
        v.bos = 15;
        v.roles[10] = TokenRole::Operator;
        v.roles[11] = TokenRole::Separator;
        v.roles[12] = TokenRole::Separator;
        v.roles[13] = TokenRole::AnswerMarker;
        v.roles[14] = TokenRole::End;
        v.roles[15] = TokenRole::Separator;
        v.validate();
        return v;
    }

    // Reduced vocabulary for small exact-enumeration tests: d digits plus the
    // five structural tokens, same ordering as standard().
    static Vocab tiny(int d) {
        if (d < 1) throw std::invalid_argument("Vocab::tiny: need at least one digit");
        Vocab v;
        v.n_digits = d;
        v.size = d + 6;
        v.roles.assign(static_cast<size_t>(v.size), TokenRole::Digit);
        v.plus = d;
        v.tsep = d + 1;
        v.dsep = d + 2;
        v.ans = d + 3;
        v.end = d + 4;
        v.bos = d + 5;
        v.roles[static_cast<size_t>(v.plus)] = TokenRole::Operator;
        v.roles[static_cast<size_t>(v.tsep)] = TokenRole::Separator;
        v.roles[static_cast<size_t>(v.dsep)] = TokenRole::Separator;
        v.roles[static_cast<size_t>(v.ans)] = TokenRole::AnswerMarker;
        v.roles[static_cast<size_t>(v.end)] = TokenRole::End;
        v.roles[static_cast<size_t>(v.bos)] = TokenRole::Separator;
        v.validate();
        return v;
    }

    bool is_digit(Token t) const {
        return t >= 0 && t < size && roles[static_cast<size_t>(t)] == TokenRole::Digit;
    }

    void validate() const {
        if (size < 5) throw ConfigError("Vocab: size must be >= 5");
        if (static_cast<int>(roles.size()) != size) throw ConfigError("Vocab: role table size mismatch");
        int n_end = 0, n_ans = 0;
        for (TokenRole r : roles) {
            if (r == TokenRole::End) ++n_end;
            if (r == TokenRole::AnswerMarker) ++n_ans;
        }
        if (n_end != 1) throw ConfigError("Vocab: exactly one end token required");
        if (n_ans != 1) throw ConfigError("Vocab: exactly one answer-marker token required");
    }

    std::string token_name(Token t) const {
        if (t >= 0 && t < n_digits) return std::to_string(t);
        if (t == plus) return "+";
        if (t == tsep) return ">";
        if (t == dsep) return "|";
        if (t == ans) return "ANS";
        if (t == end) return "END";
        if (t == bos) return "BOS";
        return "?";
    }
};

}  // namespace icr
