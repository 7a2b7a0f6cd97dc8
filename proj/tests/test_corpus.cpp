#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "icrlvr/corpus.hpp"
#include "icrlvr/io.hpp"
#include "support/oracles.hpp"

using namespace icr;

namespace {
const Vocab kVocab = Vocab::standard();
}

TEST_CASE("gen_tasks produces verifying tasks validated by the token interpreter") {
    TaskSpec spec;
    spec.family = TaskFamily::ModularChain;
    spec.operand_min = 0;
    spec.operand_max = 6;
    spec.count = 1;
    spec.seed = 7;
    const std::vector<Task> tasks = gen_tasks(kVocab, spec);
    REQUIRE(tasks.size() == 1);
    const Task& t = tasks[0];

    // independent interpreter agrees with the emitted answer and trace suffix
    const auto expected = oracle::expected_answer(kVocab, t.question);
    REQUIRE(expected.has_value());
    CHECK(t.answer == *expected);
    const auto region = oracle::trace_answer_region(kVocab, t.canonical);
    REQUIRE(region.has_value());
    CHECK(*region == *expected);
    CHECK(verify(kVocab, t.question, t.canonical) == 1);

    // one running value per operation
    const size_t ops = (t.question.size() - 1) / 2;
    Sequence steps;
    for (Token tok : t.canonical) {
        if (tok == kVocab.ans) break;
        steps.push_back(tok);
    }
    CHECK(steps.size() == ops);
}

TEST_CASE("gen_tasks respects count zero and determinism") {
    TaskSpec spec;
    spec.count = 0;
    CHECK(gen_tasks(kVocab, spec).empty());

    spec.count = 25;
    spec.seed = 99;
    spec.max_steps = 3;
    const auto a = gen_tasks(kVocab, spec);
    const auto b = gen_tasks(kVocab, spec);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].question == b[i].question);
        CHECK(a[i].canonical == b[i].canonical);
    }
}

TEST_CASE("gen_tasks validates its spec") {
    TaskSpec spec;
    spec.count = 5;
    spec.min_steps = 0;
    CHECK_THROWS_AS(gen_tasks(kVocab, spec), ConfigError);
    spec.min_steps = 3;
    spec.max_steps = 2;
    CHECK_THROWS_AS(gen_tasks(kVocab, spec), ConfigError);
    spec.max_steps = 3;
    spec.operand_max = 12;  // outside digit tokens
    CHECK_THROWS_AS(gen_tasks(kVocab, spec), ConfigError);
    spec.operand_max = 9;
    spec.context_window = 10;  // trace bounds cannot fit
    CHECK_THROWS_AS(gen_tasks(kVocab, spec), ConfigError);
}

TEST_CASE("every generated task verifies across both families") {
    for (TaskFamily family : {TaskFamily::ModularChain, TaskFamily::SortedCopy}) {
        TaskSpec spec;
        spec.family = family;
        spec.count = 40;
        spec.min_steps = family == TaskFamily::SortedCopy ? 2 : 1;
        spec.max_steps = 4;
        spec.seed = 3;
        for (const Task& t : gen_tasks(kVocab, spec)) {
            CHECK(verify(kVocab, t.question, t.canonical) == 1);
            const auto expected = oracle::expected_answer(kVocab, t.question);
            REQUIRE(expected.has_value());
            CHECK(t.answer == *expected);
        }
    }
}

TEST_CASE("verify accepts exactly the well-formed correct traces") {
    // q = 3 + 4 -> value 7, answer [7, 8]
    const Sequence q = {3, kVocab.plus, 4};
    const Task t = *task_from_question(kVocab, q);
    REQUIRE(t.canonical == Sequence{7, kVocab.ans, 7, 8, kVocab.end});

    CHECK(verify(kVocab, q, t.canonical) == 1);
    CHECK(verify(kVocab, q, {}) == 0);  // no answer marker

    // answer digits perturbed; ground truth recomputed independently
    Sequence wrong = t.canonical;
    wrong[2] = (wrong[2] + 1) % 10;
    const auto expected = oracle::expected_answer(kVocab, q);
    REQUIRE(Sequence{wrong[2], wrong[3]} != *expected);
    CHECK(verify(kVocab, q, wrong) == 0);

    // malformed shapes
    CHECK(verify(kVocab, q, {kVocab.ans, 7, 8}) == 0);                        // no end
    CHECK(verify(kVocab, q, {kVocab.ans, 7, 8, kVocab.end, 5}) == 0);         // end not last
    CHECK(verify(kVocab, q, {kVocab.ans, kVocab.ans, 7, 8, kVocab.end}) == 0);// two markers
    CHECK(verify(kVocab, q, {kVocab.ans, 7, kVocab.end}) == 0);               // short answer
    CHECK(verify(kVocab, q, {7, kVocab.ans, 7, 8, kVocab.end, kVocab.end}) == 0);  // two ends
    CHECK(verify(kVocab, q, {kVocab.end}) == 0);

    // answer region alone is enough: reasoning steps are not checked here
    CHECK(verify(kVocab, q, {1, 2, kVocab.ans, 7, 8, kVocab.end}) == 1);

    // pure function: repeated calls agree
    for (int i = 0; i < 3; ++i) CHECK(verify(kVocab, q, t.canonical) == 1);
}

TEST_CASE("quality proxy scores the canonical trace at exactly 5") {
    TaskSpec spec;
    spec.count = 20;
    spec.max_steps = 3;
    spec.seed = 11;
    for (const Task& t : gen_tasks(kVocab, spec))
        CHECK(quality_proxy(kVocab, t.question, t.canonical) == 5.0);
}

TEST_CASE("quality proxy matches the hand-computed penalty on a fixed instance") {
    const Sequence q = {3, kVocab.plus, 4};
    // one invalid intermediate step: steps [7, 9], canonical steps [7]
    const Sequence r = {7, 9, kVocab.ans, 7, 8, kVocab.end};
    REQUIRE(verify(kVocab, q, r) == 1);
    // invalid ratio 1/2, redundancy 0, excess (6-5)/5 = 0.2
    // penalty = 0.3 * 0.5 + 0.2 * 0.2 = 0.19 -> score 5 - 4 * 0.19 = 4.24
    CHECK_THAT(quality_proxy(kVocab, q, r), Catch::Matchers::WithinAbs(4.24, 1e-12));

    // duplicated step: steps [7, 7] -> redundancy 1/2, excess 0.2
    const Sequence dup = {7, 7, kVocab.ans, 7, 8, kVocab.end};
    // penalty = 0.5 * 0.5 + 0.2 * 0.2 = 0.29 -> score 3.84
    CHECK_THAT(quality_proxy(kVocab, q, dup), Catch::Matchers::WithinAbs(3.84, 1e-12));
    CHECK(quality_proxy(kVocab, q, dup) < quality_proxy(kVocab, q, {7, kVocab.ans, 7, 8, kVocab.end}));
}

TEST_CASE("quality proxy rejects incorrect traces") {
    const Sequence q = {3, kVocab.plus, 4};
    CHECK_THROWS_AS(quality_proxy(kVocab, q, {kVocab.ans, 1, 1, kVocab.end}), std::invalid_argument);
}

TEST_CASE("duplicating k steps never raises the score, strictly lowers it at k = 1") {
    const Sequence q = {2, kVocab.plus, 5, kVocab.plus, 9, kVocab.plus, 1};
    const Task t = *task_from_question(kVocab, q);
    double prev = quality_proxy(kVocab, q, t.canonical);
    REQUIRE(prev == 5.0);
    Sequence steps;
    for (Token tok : t.canonical) {
        if (tok == kVocab.ans) break;
        steps.push_back(tok);
    }
    const Sequence suffix(t.canonical.begin() + static_cast<long>(steps.size()), t.canonical.end());
    for (size_t k = 1; k <= steps.size(); ++k) {
        Sequence degraded;
        for (size_t i = 0; i < steps.size(); ++i) {
            degraded.push_back(steps[i]);
            if (i < k) degraded.push_back(steps[i]);  // duplicate the first k steps
        }
        degraded.insert(degraded.end(), suffix.begin(), suffix.end());
        const double score = quality_proxy(kVocab, q, degraded);
        CHECK(score <= prev);
        if (k == 1) CHECK(score < 5.0);
        prev = score;
    }
}

TEST_CASE("degrade_demo is the identity at level zero and strictly damaging at level one") {
    const Sequence q = {4, kVocab.plus, 9, kVocab.plus, 3};
    const Task t = *task_from_question(kVocab, q);
    const Demonstration d{t.question, t.canonical};

    const Demonstration same = degrade_demo(kVocab, d, 0.0, 5);
    CHECK(same.question == d.question);
    CHECK(same.reference == d.reference);

    const Demonstration worst = degrade_demo(kVocab, d, 1.0, 5);
    REQUIRE(verify(kVocab, worst.question, worst.reference) == 1);
    CHECK(quality_proxy(kVocab, worst.question, worst.reference) <
          quality_proxy(kVocab, d.question, d.reference));

    const Demonstration a = degrade_demo(kVocab, d, 0.5, 12);
    const Demonstration b = degrade_demo(kVocab, d, 0.5, 12);
    CHECK(a.reference == b.reference);  // deterministic given seed
    CHECK(verify(kVocab, a.question, a.reference) == 1);

    CHECK_THROWS_AS(degrade_demo(kVocab, d, 1.5, 1), std::invalid_argument);
}

TEST_CASE("build_demo_sets partitions tasks into disjoint E, E0, and training") {
    TaskSpec spec;
    spec.count = 10;
    spec.max_steps = 2;
    spec.seed = 21;
    const std::vector<Task> tasks = gen_tasks(kVocab, spec);

    const DemoSplit split = build_demo_sets(tasks, 3, 2, 77);
    CHECK(split.demo_set.demos.size() == 3);
    CHECK(split.held_out.demos.size() == 2);
    CHECK(split.training.size() == 5);
    CHECK(split.demo_set.label == "E");
    CHECK(split.held_out.label == "E0");

    std::set<Sequence> seen;
    for (const auto& d : split.demo_set.demos) CHECK(seen.insert(d.question).second);
    for (const auto& d : split.held_out.demos) CHECK(seen.insert(d.question).second);
    for (const auto& t : split.training) CHECK(seen.insert(t.question).second);

    for (const auto& d : split.demo_set.demos) CHECK(verify(kVocab, d.question, d.reference) == 1);

    CHECK_THROWS_AS(build_demo_sets(tasks, 0, 2, 1), ConfigError);
    CHECK_THROWS_AS(build_demo_sets(tasks, 9, 2, 1), ConfigError);

    const DemoSplit again = build_demo_sets(tasks, 3, 2, 77);
    for (size_t i = 0; i < 3; ++i)
        CHECK(again.demo_set.demos[i].question == split.demo_set.demos[i].question);
}

TEST_CASE("task and demo files round-trip through the line format") {
    TaskSpec spec;
    spec.count = 12;
    spec.max_steps = 2;
    spec.seed = 31;
    const std::vector<Task> tasks = gen_tasks(kVocab, spec);
    const DemoSplit split = build_demo_sets(tasks, 4, 3, 5);

    const std::string dir = "corpus_io_test_tmp";
    std::filesystem::create_directories(dir);
    save_tasks(tasks, kVocab, dir + "/tasks.tsv");
    const std::vector<Task> loaded = load_tasks(kVocab, dir + "/tasks.tsv");
    REQUIRE(loaded.size() == tasks.size());
    for (size_t i = 0; i < tasks.size(); ++i) {
        CHECK(loaded[i].question == tasks[i].question);
        CHECK(loaded[i].canonical == tasks[i].canonical);
    }

    save_demo_set(split.demo_set, kVocab, dir + "/demos.tsv");
    const DemoSet demos = load_demo_set(kVocab, dir + "/demos.tsv");
    CHECK(demos.label == "E");
    REQUIRE(demos.demos.size() == split.demo_set.demos.size());
    for (size_t i = 0; i < demos.demos.size(); ++i)
        CHECK(demos.demos[i].reference == split.demo_set.demos[i].reference);
    std::filesystem::remove_all(dir);
}
