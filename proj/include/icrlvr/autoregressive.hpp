#pragma once
// Trainable autoregressive policy: a linear-softmax head over bounded-order
// context features. Log-probabilities are exact and gradients analytic, so no
// learning framework is involved.
//
// Features for the next-token logits:
//   - bias per token
//   - identity of each of the last `order` tokens (BOS beyond the start)
//   - pairwise joint identity for selected offset pairs; modular arithmetic
//     is not linearly separable over single positions, so these carry the
//     task's actual computation
//   - segment-role flags: capped counts of the two separator tokens seen so far
//   - a per-token recent-window presence bonus (copy bias): token t gains
//     weight[t] whenever t occurred within the last bag_window tokens
// Logits are clamped to +/- logit_clamp so every log-probability is finite.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "icrlvr/core.hpp"
#include "icrlvr/vocab.hpp"

namespace icr {

struct ArConfig {
    int window = 64;       // max rendered context+target length
    int order = 6;         // unary feature offsets 1..order
    std::vector<std::pair<int, int>> pairs;  // pairwise offsets (j1 < j2)
    bool role_features = true;
    bool bag_feature = true;
    int bag_window = 12;
    double logit_clamp = 30.0;

    static std::vector<std::pair<int, int>> all_pairs(int order) {
        std::vector<std::pair<int, int>> out;
        for (int a = 1; a <= order; ++a)
            for (int b = a + 1; b <= order; ++b) out.emplace_back(a, b);
        return out;
    }

    static ArConfig standard() {
        ArConfig c;
        c.pairs = all_pairs(c.order);
        return c;
    }

    void validate() const {
        if (window < 2) throw ConfigError("ArConfig: window too small");
        if (order < 1 || order > 32) throw ConfigError("ArConfig: order must be in [1, 32]");
        for (auto [a, b] : pairs)
            if (a < 1 || b <= a || b > order) throw ConfigError("ArConfig: bad offset pair");
        if (bag_feature && bag_window < 1) throw ConfigError("ArConfig: bag window must be >= 1");
        if (logit_clamp <= 0.0) throw ConfigError("ArConfig: logit clamp must be positive");
    }
};

struct SampleResult {
    Sequence trace;
    std::vector<double> token_logprobs;  // log pi(token | context so far), temperature 1
};

class AutoregressivePolicy {
public:
    AutoregressivePolicy() = default;

    AutoregressivePolicy(Vocab vocab, ArConfig cfg) : vocab_(std::move(vocab)), cfg_(std::move(cfg)) {
        cfg_.validate();
        const size_t v = static_cast<size_t>(vocab_.size);
        unary_offset_ = v;
        pair_offset_ = unary_offset_ + static_cast<size_t>(cfg_.order) * v * v;
        role_offset_ = pair_offset_ + cfg_.pairs.size() * v * v * v;
        bag_offset_ = role_offset_ + (cfg_.role_features ? kRoleRows * v : 0);
        const size_t total = bag_offset_ + (cfg_.bag_feature ? v : 0);
        theta_.assign(total, 0.0);
    }

    const Vocab& vocab() const { return vocab_; }
    const ArConfig& config() const { return cfg_; }
    std::vector<double>& theta() { return theta_; }
    const std::vector<double>& theta() const { return theta_; }
    size_t param_count() const { return theta_.size(); }
    size_t bag_param_index(Token t) const {
        if (!cfg_.bag_feature) throw std::logic_error("bag feature disabled");
        return bag_offset_ + static_cast<size_t>(t);
    }

    size_t bias_index(Token t) const { return static_cast<size_t>(t); }
    size_t unary_index(int offset, Token prev, Token t) const {
        const size_t v = static_cast<size_t>(vocab_.size);
        return unary_offset_ + ((static_cast<size_t>(offset - 1) * v + static_cast<size_t>(prev)) * v) +
               static_cast<size_t>(t);
    }
    size_t pair_index(size_t pair_id, Token a, Token b, Token t) const {
        const size_t v = static_cast<size_t>(vocab_.size);
        return pair_offset_ + (((pair_id * v + static_cast<size_t>(a)) * v + static_cast<size_t>(b)) * v) +
               static_cast<size_t>(t);
    }
    size_t role_index(int row, Token t) const {
        return role_offset_ + static_cast<size_t>(row) * static_cast<size_t>(vocab_.size) +
               static_cast<size_t>(t);
    }

    // Raw (unclamped) linear logits for the next token.
    void raw_logits(std::span<const Token> context, std::vector<double>& out) const {
        const int v = vocab_.size;
        out.assign(static_cast<size_t>(v), 0.0);
        for (int t = 0; t < v; ++t) out[static_cast<size_t>(t)] = theta_[bias_index(t)];

        for (int j = 1; j <= cfg_.order; ++j) {
            const Token prev = token_at(context, j);
            const size_t base = unary_index(j, prev, 0);
            for (int t = 0; t < v; ++t) out[static_cast<size_t>(t)] += theta_[base + static_cast<size_t>(t)];
        }
        for (size_t p = 0; p < cfg_.pairs.size(); ++p) {
            const Token a = token_at(context, cfg_.pairs[p].first);
            const Token b = token_at(context, cfg_.pairs[p].second);
            const size_t base = pair_index(p, a, b, 0);
            for (int t = 0; t < v; ++t) out[static_cast<size_t>(t)] += theta_[base + static_cast<size_t>(t)];
        }
        if (cfg_.role_features) {
            const size_t base = role_index(role_row(context), 0);
            for (int t = 0; t < v; ++t) out[static_cast<size_t>(t)] += theta_[base + static_cast<size_t>(t)];
        }
        if (cfg_.bag_feature) {
            const std::vector<char> present = bag_presence(context);
            for (int t = 0; t < v; ++t)
                if (present[static_cast<size_t>(t)])
                    out[static_cast<size_t>(t)] += theta_[bag_offset_ + static_cast<size_t>(t)];
        }
    }

    // Next-token log-probabilities (clamped logits, exact log-softmax).
    std::vector<double> next_token_logprobs(std::span<const Token> context) const {
        std::vector<double> logits;
        raw_logits(context, logits);
        for (double& x : logits) x = std::clamp(x, -cfg_.logit_clamp, cfg_.logit_clamp);
        const double lse = logsumexp(logits);
        for (double& x : logits) x -= lse;
        return logits;
    }

    // log pi(target | context): sum over target positions. Exact, no sampling.
    double logprob(std::span<const Token> context, std::span<const Token> target) const {
        double acc = 0.0;
        for (double lp : per_token_logprobs(context, target)) acc += lp;
        return acc;
    }

    std::vector<double> per_token_logprobs(std::span<const Token> context,
                                           std::span<const Token> target) const {
        check_window(context.size() + target.size());
        Sequence ctx(context.begin(), context.end());
        std::vector<double> out;
        out.reserve(target.size());
        for (Token y : target) {
            check_token(y);
            out.push_back(next_token_logprobs(ctx)[static_cast<size_t>(y)]);
            ctx.push_back(y);
        }
        return out;
    }

    // Accumulates sum_i weights[i] * d log pi(target[i] | prefix) / d theta
    // into `grad` (size param_count). Clamped logits contribute no gradient.
    void accumulate_weighted_grad(std::span<const Token> context, std::span<const Token> target,
                                  std::span<const double> weights, std::span<double> grad) const {
        if (weights.size() != target.size())
            throw std::invalid_argument("accumulate_weighted_grad: one weight per target token");
        if (grad.size() != theta_.size())
            throw std::invalid_argument("accumulate_weighted_grad: gradient buffer size mismatch");
        check_window(context.size() + target.size());

        const int v = vocab_.size;
        Sequence ctx(context.begin(), context.end());
        std::vector<double> raw, probs;
        for (size_t i = 0; i < target.size(); ++i) {
            const Token y = target[i];
            check_token(y);
            const double w = weights[i];
            if (w != 0.0) {
                raw_logits(ctx, raw);
                probs.assign(static_cast<size_t>(v), 0.0);
                for (int t = 0; t < v; ++t)
                    probs[static_cast<size_t>(t)] = std::clamp(raw[static_cast<size_t>(t)], -cfg_.logit_clamp, cfg_.logit_clamp);
                const double lse = logsumexp(probs);
                for (double& x : probs) x = std::exp(x - lse);

                std::vector<char> present;
                if (cfg_.bag_feature) present = bag_presence(ctx);
                const int role = cfg_.role_features ? role_row(ctx) : 0;

                std::array<Token, 64> prev{};
                for (int j = 1; j <= cfg_.order; ++j) prev[static_cast<size_t>(j)] = token_at(ctx, j);

                for (int t = 0; t < v; ++t) {
                    // clamped logits are flat: no gradient through them
                    if (std::abs(raw[static_cast<size_t>(t)]) > cfg_.logit_clamp) continue;
                    const double coef = w * ((t == y ? 1.0 : 0.0) - probs[static_cast<size_t>(t)]);
                    if (coef == 0.0) continue;
                    grad[bias_index(t)] += coef;
                    for (int j = 1; j <= cfg_.order; ++j)
                        grad[unary_index(j, prev[static_cast<size_t>(j)], t)] += coef;
                    for (size_t p = 0; p < cfg_.pairs.size(); ++p)
                        grad[pair_index(p, prev[static_cast<size_t>(cfg_.pairs[p].first)],
                                        prev[static_cast<size_t>(cfg_.pairs[p].second)], t)] += coef;
                    if (cfg_.role_features) grad[role_index(role, t)] += coef;
                    if (cfg_.bag_feature && present[static_cast<size_t>(t)])
                        grad[bag_offset_ + static_cast<size_t>(t)] += coef;
                }
            }
            ctx.push_back(y);
        }
    }

    std::vector<double> logprob_grad(std::span<const Token> context, std::span<const Token> target) const {
        std::vector<double> grad(theta_.size(), 0.0);
        const std::vector<double> ones(target.size(), 1.0);
        accumulate_weighted_grad(context, target, ones, grad);
        return grad;
    }

    // Autoregressive sampling until the end token or max_len (also capped by
    // the context window). Greedy mode takes the argmax and ignores the rng.
    SampleResult sample(std::span<const Token> context, int max_len, double temperature, Rng& rng,
                        bool greedy = false) const {
        if (!greedy && temperature <= 0.0)
            throw std::invalid_argument("sample: temperature must be positive");
        SampleResult out;
        Sequence ctx(context.begin(), context.end());
        const int room = cfg_.window - static_cast<int>(context.size());
        const int limit = std::min(max_len, std::max(0, room));
        for (int i = 0; i < limit; ++i) {
            const std::vector<double> logprobs = next_token_logprobs(ctx);
            Token pick = 0;
            if (greedy) {
                for (int t = 1; t < vocab_.size; ++t)
                    if (logprobs[static_cast<size_t>(t)] > logprobs[static_cast<size_t>(pick)]) pick = t;
            } else {
                std::vector<double> weights(logprobs.size());
                if (temperature == 1.0) {
                    for (size_t t = 0; t < logprobs.size(); ++t) weights[t] = std::exp(logprobs[t]);
                } else {
                    const double inv = 1.0 / temperature;
                    double m = logprobs[0];
                    for (double lp : logprobs) m = std::max(m, lp);
                    for (size_t t = 0; t < logprobs.size(); ++t)
                        weights[t] = std::exp((logprobs[t] - m) * inv);
                }
                pick = static_cast<Token>(rng.categorical(weights));
            }
            out.trace.push_back(pick);
            out.token_logprobs.push_back(logprobs[static_cast<size_t>(pick)]);
            ctx.push_back(pick);
            if (pick == vocab_.end) break;
        }
        return out;
    }

private:
    static constexpr int kRoleRows = 16;  // (min(#tsep,3), min(#dsep,3)) grid

    Token token_at(std::span<const Token> ctx, int offset_back) const {
        const long idx = static_cast<long>(ctx.size()) - offset_back;
        return idx >= 0 ? ctx[static_cast<size_t>(idx)] : vocab_.bos;
    }

    int role_row(std::span<const Token> ctx) const {
        int n_tsep = 0, n_dsep = 0;
        for (Token t : ctx) {
            if (t == vocab_.tsep) ++n_tsep;
            if (t == vocab_.dsep) ++n_dsep;
        }
        return std::min(n_tsep, 3) * 4 + std::min(n_dsep, 3);
    }

    std::vector<char> bag_presence(std::span<const Token> ctx) const {
        std::vector<char> present(static_cast<size_t>(vocab_.size), 0);
        const size_t from = ctx.size() > static_cast<size_t>(cfg_.bag_window)
                                ? ctx.size() - static_cast<size_t>(cfg_.bag_window)
                                : 0;
        for (size_t i = from; i < ctx.size(); ++i)
            if (ctx[i] >= 0 && ctx[i] < vocab_.size) present[static_cast<size_t>(ctx[i])] = 1;
        return present;
    }

    void check_window(size_t total) const {
        if (total > static_cast<size_t>(cfg_.window))
            throw WindowOverflowError("rendered context + target exceeds the context window");
    }

    void check_token(Token t) const {
        if (t < 0 || t >= vocab_.size) throw std::out_of_range("token id outside vocabulary");
    }

    Vocab vocab_;
    ArConfig cfg_;
    std::vector<double> theta_;
    size_t unary_offset_ = 0, pair_offset_ = 0, role_offset_ = 0, bag_offset_ = 0;
};

// Uniform copy bias: every token gains the same weight when present in the
// recent window. Used to construct copy-biased policies in analyses.
inline void set_uniform_copy_bias(AutoregressivePolicy& p, double weight) {
    for (Token t = 0; t < p.vocab().size; ++t) p.theta()[p.bag_param_index(t)] = weight;
}

// ---- checkpoint format ------------------------------------------------------
// Versioned flat text file: header lines, then one parameter per line in the
// fixed theta ordering. Decimal text at 17 significant digits round-trips
// doubles exactly.

inline void save_checkpoint(const AutoregressivePolicy& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("save_checkpoint: cannot open " + path);
    const ArConfig& c = p.config();
    out << "icrlvr-policy v1\n";
    out << "vocab_size " << p.vocab().size << "\n";
    out << "n_digits " << p.vocab().n_digits << "\n";
    out << "window " << c.window << "\n";
    out << "order " << c.order << "\n";
    out << "pairs";
    for (auto [a, b] : c.pairs) out << " " << a << ":" << b;
    out << "\n";
    out << "role_features " << (c.role_features ? 1 : 0) << "\n";
    out << "bag_feature " << (c.bag_feature ? 1 : 0) << "\n";
    out << "bag_window " << c.bag_window << "\n";
    out << "logit_clamp " << c.logit_clamp << "\n";
    out << "param_count " << p.param_count() << "\n";
    out.precision(17);
    for (double x : p.theta()) out << x << "\n";
    if (!out) throw ConfigError("save_checkpoint: write failed for " + path);
}

inline AutoregressivePolicy load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("load_checkpoint: cannot open " + path);
    std::string magic, version;
    in >> magic >> version;
    if (magic != "icrlvr-policy" || version != "v1")
        throw ConfigError("load_checkpoint: unrecognized format in " + path);

    ArConfig cfg;
    cfg.pairs.clear();
    int vocab_size = 0, n_digits = 0;
    size_t param_count = 0;
    std::string key;
    while (in >> key) {
        if (key == "vocab_size") in >> vocab_size;
        else if (key == "n_digits") in >> n_digits;
        else if (key == "window") in >> cfg.window;
        else if (key == "order") in >> cfg.order;
        else if (key == "pairs") {
            std::string rest;
            std::getline(in, rest);
            std::istringstream ps(rest);
            std::string item;
            while (ps >> item) {
                const size_t colon = item.find(':');
                if (colon == std::string::npos) throw ConfigError("load_checkpoint: bad pair entry");
                cfg.pairs.emplace_back(std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1)));
            }
        } else if (key == "role_features") {
            int f = 0;
            in >> f;
            cfg.role_features = f != 0;
        } else if (key == "bag_feature") {
            int f = 0;
            in >> f;
            cfg.bag_feature = f != 0;
        } else if (key == "bag_window") in >> cfg.bag_window;
        else if (key == "logit_clamp") in >> cfg.logit_clamp;
        else if (key == "param_count") {
            in >> param_count;
            break;
        } else {
            throw ConfigError("load_checkpoint: unknown header key '" + key + "'");
        }
    }
    if (n_digits < 1 || vocab_size != n_digits + 6)
        throw ConfigError("load_checkpoint: inconsistent vocabulary header");
    AutoregressivePolicy p(Vocab::tiny(n_digits), cfg);
    if (p.param_count() != param_count)
        throw ConfigError("load_checkpoint: parameter count does not match configuration");
    for (size_t i = 0; i < param_count; ++i)
        if (!(in >> p.theta()[i])) throw ConfigError("load_checkpoint: truncated parameter block");
    return p;
}

}  // namespace icr
