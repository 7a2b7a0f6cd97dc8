#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "icrlvr/autoregressive.hpp"
#include "icrlvr/layout.hpp"
#include "support/oracles.hpp"

using namespace icr;

namespace {

ArConfig small_config() {
    ArConfig cfg;
    cfg.window = 32;
    cfg.order = 3;
    cfg.pairs = {{1, 2}, {1, 3}};
    cfg.role_features = true;
    cfg.bag_feature = true;
    cfg.bag_window = 6;
    return cfg;
}

AutoregressivePolicy random_policy(const Vocab& vocab, const ArConfig& cfg, uint64_t seed,
                                   double scale = 0.7) {
    AutoregressivePolicy p(vocab, cfg);
    Rng rng(seed);
    for (double& x : p.theta()) x = scale * rng.normal();
    return p;
}

Sequence random_sequence(const Vocab& vocab, int len, Rng& rng) {
    Sequence out;
    for (int i = 0; i < len; ++i) out.push_back(rng.uniform_int(0, vocab.size - 1));
    return out;
}

}  // namespace

TEST_CASE("logprob of an empty target is zero") {
    const Vocab vocab = Vocab::tiny(4);
    const AutoregressivePolicy p(vocab, small_config());
    CHECK(p.logprob(Sequence{0, 1, 2}, Sequence{}) == 0.0);
    CHECK(p.logprob_grad(Sequence{0, 1}, Sequence{}) == std::vector<double>(p.param_count(), 0.0));
}

TEST_CASE("uniform policy scores every token at log(1/vocab)") {
    const Vocab vocab = Vocab::tiny(4);  // 10 tokens
    const AutoregressivePolicy p(vocab, small_config());
    const Sequence target = {0, 3, 7, 1, 9};
    CHECK_THAT(p.logprob(Sequence{2, 1}, target),
               Catch::Matchers::WithinAbs(5.0 * std::log(1.0 / 10.0), 1e-12));
}

TEST_CASE("logprob equals the independent softmax-chain evaluation") {
    const Vocab vocab = Vocab::tiny(5);
    Rng rng(404);
    for (int trial = 0; trial < 10; ++trial) {
        const AutoregressivePolicy p = random_policy(vocab, small_config(), 500 + trial);
        const Sequence ctx = random_sequence(vocab, rng.uniform_int(0, 6), rng);
        const Sequence target = random_sequence(vocab, rng.uniform_int(1, 8), rng);
        const double lib = p.logprob(ctx, target);
        const double ref = oracle::chain_softmax_logprob(p, ctx, target);
        CHECK_THAT(lib, Catch::Matchers::WithinAbs(ref, 1e-11));
    }
}

TEST_CASE("next-token distributions normalize within 1e-9") {
    const Vocab vocab = Vocab::tiny(6);
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const AutoregressivePolicy p = random_policy(vocab, small_config(), 90 + trial, 2.0);
        const Sequence ctx = random_sequence(vocab, rng.uniform_int(0, 10), rng);
        double total = 0.0;
        for (double lp : p.next_token_logprobs(ctx)) total += std::exp(lp);
        CHECK_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
}

TEST_CASE("logprob is additive over target splits") {
    const Vocab vocab = Vocab::tiny(5);
    Rng rng(11);
    for (int trial = 0; trial < 12; ++trial) {
        const AutoregressivePolicy p = random_policy(vocab, small_config(), 300 + trial);
        const Sequence ctx = random_sequence(vocab, 3, rng);
        const Sequence target = random_sequence(vocab, 6, rng);
        const size_t cut = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(target.size())));
        const Sequence t1(target.begin(), target.begin() + static_cast<long>(cut));
        const Sequence t2(target.begin() + static_cast<long>(cut), target.end());
        const double whole = p.logprob(ctx, target);
        const double parts = p.logprob(ctx, t1) + p.logprob(concat(ctx, t1), t2);
        CHECK_THAT(whole, Catch::Matchers::WithinAbs(parts, 1e-12));
    }
}

TEST_CASE("window overflow is rejected") {
    const Vocab vocab = Vocab::tiny(4);
    ArConfig cfg = small_config();
    cfg.window = 8;
    const AutoregressivePolicy p(vocab, cfg);
    const Sequence ctx = {0, 1, 2, 3, 0, 1};
    CHECK_NOTHROW(p.logprob(ctx, Sequence{0, 1}));
    CHECK_THROWS_AS(p.logprob(ctx, Sequence{0, 1, 2}), WindowOverflowError);
    CHECK_THROWS_AS(p.logprob_grad(ctx, Sequence{0, 1, 2}), WindowOverflowError);
}

TEST_CASE("single-parameter bias matches the hand-derived softmax derivative") {
    const Vocab vocab = Vocab::tiny(1);  // 7 tokens
    ArConfig cfg;
    cfg.window = 8;
    cfg.order = 1;
    cfg.pairs = {};
    cfg.role_features = false;
    cfg.bag_feature = false;
    AutoregressivePolicy p(vocab, cfg);
    const Token t0 = 2;
    const double w = 0.8;
    p.theta()[p.bias_index(t0)] = w;

    // log pi(t0) = w - log(e^w + (V-1)); d/dw = 1 - e^w / (e^w + V - 1)
    const double V = vocab.size;
    const double expected = 1.0 - std::exp(w) / (std::exp(w) + (V - 1.0));
    const std::vector<double> grad = p.logprob_grad(Sequence{}, Sequence{t0});
    CHECK_THAT(grad[p.bias_index(t0)], Catch::Matchers::WithinAbs(expected, 1e-12));
    // every other token's bias moves by -p(t) = -1 / (e^w + V - 1)
    const double off = -1.0 / (std::exp(w) + V - 1.0);
    CHECK_THAT(grad[p.bias_index(0)], Catch::Matchers::WithinAbs(off, 1e-12));
}

TEST_CASE("analytic gradients match central finite differences") {
    const Vocab vocab = Vocab::tiny(3);  // 9 tokens keeps full-parameter sweeps fast
    Rng rng(2024);
    for (int trial = 0; trial < 6; ++trial) {
        ArConfig cfg;
        cfg.window = 24;
        cfg.order = 2;
        cfg.pairs = {{1, 2}};
        cfg.role_features = trial % 2 == 0;
        cfg.bag_feature = trial % 3 != 0;
        cfg.bag_window = 5;
        AutoregressivePolicy p = random_policy(vocab, cfg, 7000 + static_cast<uint64_t>(trial), 0.5);
        const Sequence ctx = random_sequence(vocab, rng.uniform_int(0, 5), rng);
        const Sequence target = random_sequence(vocab, rng.uniform_int(1, 5), rng);

        const std::vector<double> analytic = p.logprob_grad(ctx, target);
        const std::vector<double> fd = oracle::finite_difference_grad(p, ctx, target, 1e-5);
        double worst = 0.0;
        for (size_t i = 0; i < analytic.size(); ++i)
            worst = std::max(worst, std::abs(analytic[i] - fd[i]) / (1.0 + std::abs(fd[i])));
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("sampling terminates immediately under an end-dominated policy") {
    const Vocab vocab = Vocab::tiny(4);
    AutoregressivePolicy p(vocab, small_config());
    for (Token t = 0; t < vocab.size; ++t)
        p.theta()[p.bias_index(t)] = (t == vocab.end) ? 60.0 : -60.0;  // clamps to +/-30

    Rng rng(5);
    const SampleResult greedy = p.sample(Sequence{0, 1}, 10, 1.0, rng, /*greedy=*/true);
    CHECK(greedy.trace == Sequence{vocab.end});

    const SampleResult sampled = p.sample(Sequence{0, 1}, 10, 1.0, rng);
    CHECK(sampled.trace == Sequence{vocab.end});
    CHECK(sampled.token_logprobs.size() == 1);
}

TEST_CASE("greedy decoding is deterministic and ignores the rng") {
    const Vocab vocab = Vocab::tiny(4);
    const AutoregressivePolicy p = random_policy(vocab, small_config(), 77);
    Rng rng_a(1), rng_b(999);
    const SampleResult a = p.sample(Sequence{1, 2, 3}, 8, 1.0, rng_a, true);
    const SampleResult b = p.sample(Sequence{1, 2, 3}, 8, 1.0, rng_b, true);
    CHECK(a.trace == b.trace);
}

TEST_CASE("sampling is reproducible for a fixed rng seed and respects max_len") {
    const Vocab vocab = Vocab::tiny(4);
    const AutoregressivePolicy p = random_policy(vocab, small_config(), 13);
    Rng rng_a(42), rng_b(42);
    const SampleResult a = p.sample(Sequence{0}, 9, 1.0, rng_a);
    const SampleResult b = p.sample(Sequence{0}, 9, 1.0, rng_b);
    CHECK(a.trace == b.trace);
    CHECK(a.token_logprobs == b.token_logprobs);
    CHECK(a.trace.size() <= 9);
    CHECK_THROWS_AS(p.sample(Sequence{0}, 5, 0.0, rng_a), std::invalid_argument);
}

TEST_CASE("recorded sample logprobs match logprob() on the sampled trace") {
    const Vocab vocab = Vocab::tiny(5);
    const AutoregressivePolicy p = random_policy(vocab, small_config(), 21);
    Rng rng(3);
    const Sequence ctx = {0, 4, 2};
    const SampleResult s = p.sample(ctx, 12, 1.0, rng);
    REQUIRE_FALSE(s.trace.empty());
    double recorded = 0.0;
    for (double lp : s.token_logprobs) recorded += lp;
    CHECK_THAT(recorded, Catch::Matchers::WithinAbs(p.logprob(ctx, s.trace), 1e-12));
}

TEST_CASE("checkpoints round-trip exactly") {
    const Vocab vocab = Vocab::standard();
    ArConfig cfg = ArConfig::standard();
    cfg.window = 48;
    AutoregressivePolicy p = random_policy(vocab, cfg, 99);
    const std::string path = "ar_ckpt_roundtrip_tmp";
    save_checkpoint(p, path);
    const AutoregressivePolicy q = load_checkpoint(path);
    CHECK(q.vocab().size == p.vocab().size);
    CHECK(q.config().window == p.config().window);
    CHECK(q.config().pairs == p.config().pairs);
    REQUIRE(q.param_count() == p.param_count());
    CHECK(q.theta() == p.theta());  // decimal text must round-trip bit-exactly

    Rng rng(8);
    const Sequence ctx = {3, vocab.plus, 4, vocab.tsep};
    const Sequence target = {7, vocab.ans, 7, 8, vocab.end};
    CHECK(p.logprob(ctx, target) == q.logprob(ctx, target));
    std::filesystem::remove(path);
}

TEST_CASE("prompt layouts are injective and fit the window for corpus sequences") {
    const Vocab vocab = Vocab::standard();
    const PromptLayout layout(vocab);
    const Sequence eq = {1, vocab.plus, 2};
    const Sequence er = {3, vocab.ans, 3, 4, vocab.end};
    const Sequence q = {5, vocab.plus, 6};
    const Sequence r = {1, vocab.ans, 1, 2, vocab.end};

    const auto zero = layout.split(layout.zero_shot(q));
    REQUIRE(zero.has_value());
    CHECK(*zero == std::vector<Sequence>{q});

    const auto cond = layout.split(layout.conditioned(eq, er, q));
    REQUIRE(cond.has_value());
    CHECK(*cond == std::vector<Sequence>{eq, er, q});

    const auto probe = layout.split(layout.probe(q, r, eq));
    REQUIRE(probe.has_value());
    CHECK(*probe == std::vector<Sequence>{q, r, eq});

    const auto prep = layout.split(layout.prepended(eq, q));
    REQUIRE(prep.has_value());
    CHECK(*prep == std::vector<Sequence>{eq, q});

    CHECK(layout.is_zero_shot_context(layout.zero_shot(q), q));
    CHECK_FALSE(layout.is_zero_shot_context(layout.conditioned(eq, er, q), q));

    // all four layouts for max-size corpus sequences fit a 64-token window
    const AutoregressivePolicy p(vocab, ArConfig::standard());
    const Sequence big_q = {9, vocab.plus, 9, vocab.plus, 9, vocab.plus, 9};
    const Sequence big_r = {7, 6, 5, vocab.ans, 5, 6, vocab.end};
    CHECK_NOTHROW(p.logprob(layout.conditioned(big_q, big_r, big_q), big_r));
    CHECK_NOTHROW(p.logprob(layout.probe(big_q, big_r, big_q), big_r));
}
