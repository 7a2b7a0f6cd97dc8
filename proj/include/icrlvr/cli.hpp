#pragma once
// Command-line entry point. Subcommands: gen-tasks, verify, score, train,
// analyze. Exit status contract: 0 pass, 1 scientific-check failure,
// 2 usage or configuration error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "icrlvr/analysis.hpp"
#include "icrlvr/autoregressive.hpp"
#include "icrlvr/core.hpp"
#include "icrlvr/corpus.hpp"
#include "icrlvr/evidence.hpp"
#include "icrlvr/io.hpp"
#include "icrlvr/suites.hpp"
#include "icrlvr/trainer.hpp"

namespace icr::cli {

inline const char* kUsage =
    "usage: icrlvr <subcommand> [flags]\n"
    "\n"
    "subcommands:\n"
    "  gen-tasks  --out DIR --count N [--family F --seed S --min-steps A --max-steps B\n"
    "             --operand-min X --operand-max Y --window W --n-demos D --n-holdout H]\n"
    "  verify     [--suite all|bayes|lemma|bounds|equivalence|variance|loglinear|delta]\n"
    "             [--sizes A,B,C,D] [--seed S] [--trials N]\n"
    "  score      --tasks FILE --demos FILE --out FILE.csv [--policy CKPT --rollouts N --seed S]\n"
    "  train      --algo grpo|dapo|ic-dapo --out DIR [--config FILE --steps N --group-size G\n"
    "             --eps-low X --eps-high Y --seed S]\n"
    "  analyze    --run DIR [--out FILE.csv --seed S]\n";

namespace detail {

struct Flags {
    std::map<std::string, std::string> values;

    bool has(const std::string& key) const { return values.count(key) > 0; }

    std::string get(const std::string& key, const std::string& fallback = "") const {
        auto it = values.find(key);
        return it == values.end() ? fallback : it->second;
    }

    std::string require(const std::string& key) const {
        auto it = values.find(key);
        if (it == values.end()) throw ConfigError("missing required flag --" + key);
        return it->second;
    }
};

inline Flags parse_flags(int argc, char** argv, int start, const std::set<std::string>& known) {
    Flags flags;
    for (int i = start; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + arg + "'");
        const std::string key = arg.substr(2);
        if (!known.count(key)) throw ConfigError("unknown flag --" + key);
        if (i + 1 >= argc) throw ConfigError("flag --" + key + " needs a value");
        if (flags.values.count(key)) throw ConfigError("duplicate flag --" + key);
        flags.values[key] = argv[++i];
    }
    return flags;
}

inline long to_long(const std::string& s, const std::string& what) {
    try {
        size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("expected an integer for " + what + ", got '" + s + "'");
    }
}

inline double to_double(const std::string& s, const std::string& what) {
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("expected a number for " + what + ", got '" + s + "'");
    }
}

inline std::array<int, 4> parse_sizes(const std::string& s) {
    std::array<int, 4> out = {3, 3, 3, 3};
    std::istringstream ss(s);
    std::string item;
    int i = 0;
    while (std::getline(ss, item, ',')) {
        if (i >= 4) throw ConfigError("--sizes wants exactly four comma-separated integers");
        out[static_cast<size_t>(i++)] = static_cast<int>(to_long(item, "--sizes"));
    }
    if (i != 4) throw ConfigError("--sizes wants exactly four comma-separated integers");
    return out;
}

inline std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace detail

// ---- gen-tasks ---------------------------------------------------------------

inline int cmd_gen_tasks(const detail::Flags& flags) {
    const Vocab vocab = Vocab::standard();
    TaskSpec spec;
    if (flags.has("family")) {
        auto fam = family_from_name(flags.get("family"));
        if (!fam) throw ConfigError("unknown task family '" + flags.get("family") + "'");
        spec.family = *fam;
    }
    spec.count = static_cast<int>(detail::to_long(flags.require("count"), "--count"));
    spec.seed = static_cast<uint64_t>(detail::to_long(flags.get("seed", "1"), "--seed"));
    spec.min_steps = static_cast<int>(detail::to_long(flags.get("min-steps", "1"), "--min-steps"));
    spec.max_steps = static_cast<int>(detail::to_long(flags.get("max-steps", "1"), "--max-steps"));
    spec.operand_min = static_cast<int>(detail::to_long(flags.get("operand-min", "0"), "--operand-min"));
    spec.operand_max = static_cast<int>(detail::to_long(flags.get("operand-max", "9"), "--operand-max"));
    spec.context_window = static_cast<int>(detail::to_long(flags.get("window", "64"), "--window"));

    const std::string out_dir = flags.require("out");
    std::filesystem::create_directories(out_dir);
    const std::vector<Task> tasks = gen_tasks(vocab, spec);

    const int n_demos = static_cast<int>(detail::to_long(flags.get("n-demos", "0"), "--n-demos"));
    const int n_holdout = static_cast<int>(detail::to_long(flags.get("n-holdout", "0"), "--n-holdout"));
    if (n_demos > 0) {
        const DemoSplit split = build_demo_sets(tasks, n_demos, n_holdout, spec.seed);
        save_tasks(split.training, vocab, out_dir + "/train-tasks.tsv");
        save_demo_set(split.demo_set, vocab, out_dir + "/demos-E.tsv");
        save_demo_set(split.held_out, vocab, out_dir + "/demos-E0.tsv");
    }
    save_tasks(tasks, vocab, out_dir + "/tasks.tsv");
    std::cout << "generated " << tasks.size() << " " << family_name(spec.family) << " tasks -> "
              << out_dir << "\n";
    return 0;
}

// ---- verify -------------------------------------------------------------------

inline int cmd_verify(const detail::Flags& flags) {
    const std::string suite = flags.get("suite", "all");
    const std::array<int, 4> sizes = detail::parse_sizes(flags.get("sizes", "3,3,3,3"));
    const uint64_t seed = static_cast<uint64_t>(detail::to_long(flags.get("seed", "1"), "--seed"));
    const int trials = static_cast<int>(detail::to_long(flags.get("trials", "100"), "--trials"));

    const std::vector<SuiteCheck> checks = run_suite(suite, sizes, seed, trials);
    bool all_pass = true;
    for (const SuiteCheck& c : checks) {
        std::printf("check %-46s stat=%-13.6g tol%s%-10.4g %s%s%s\n", c.name.c_str(), c.statistic,
                    c.greater_is_pass ? ">" : "<", c.tolerance, c.pass ? "PASS" : "FAIL",
                    c.note.empty() ? "" : "  # ", c.note.c_str());
        all_pass = all_pass && c.pass;
    }
    std::printf("verify: %zu checks, %s\n", checks.size(), all_pass ? "all passed" : "FAILURES present");
    return all_pass ? 0 : 1;
}

// ---- score --------------------------------------------------------------------

inline int cmd_score(const detail::Flags& flags) {
    const Vocab vocab = Vocab::standard();
    const std::vector<Task> tasks = load_tasks(vocab, flags.require("tasks"));
    const DemoSet demos = load_demo_set(vocab, flags.require("demos"));
    if (tasks.empty()) throw ConfigError("score: empty task file");

    AutoregressivePolicy policy = flags.has("policy")
                                      ? load_checkpoint(flags.get("policy"))
                                      : AutoregressivePolicy(vocab, ArConfig::standard());
    if (policy.vocab().size != vocab.size) throw ConfigError("score: checkpoint vocabulary mismatch");
    const PromptLayout layout(vocab);
    ArBackend backend(policy, layout);

    const int rollouts = static_cast<int>(detail::to_long(flags.get("rollouts", "4"), "--rollouts"));
    Rng rng(static_cast<uint64_t>(detail::to_long(flags.get("seed", "1"), "--seed")));

    const std::string out_path = flags.require("out");
    std::ofstream out(out_path);
    if (!out) throw ConfigError("score: cannot open " + out_path);
    out << "question_id,trace_id,delta,weight,variance,jensen_gap\n";
    for (size_t qi = 0; qi < tasks.size(); ++qi) {
        for (int t = 0; t < rollouts; ++t) {
            const Sequence trace = backend.sample_zero_shot(tasks[qi].question, rng);
            if (trace.empty()) continue;
            const EvidenceGainReport rep =
                evidence_gain(backend, tasks[qi].question, trace, demos.demos);
            out << qi << "," << t << "," << detail::fmt(rep.mean_gain) << ","
                << detail::fmt(rep.weight) << "," << detail::fmt(rep.variance) << ","
                << detail::fmt(rep.jensen_gap) << "\n";
        }
    }
    std::cout << "scored " << tasks.size() << " questions x " << rollouts << " rollouts -> "
              << out_path << "\n";
    return 0;
}

// ---- train --------------------------------------------------------------------

namespace detail {

inline const std::set<std::string>& train_config_keys() {
    static const std::set<std::string> keys = {
        // trainer
        "format_version", "algo", "steps", "group_size", "learning_rate", "batch_questions",
        "eps_low", "eps_high", "seed", "checkpoint_interval", "probe_interval", "temperature",
        "max_trace_len", "eval_k", "eval_questions", "probe_questions", "probe_rollouts",
        "warm_start_epochs", "warm_start_lr",
        // corpus, either files or generation settings
        "tasks", "demos", "holdout", "family", "count", "corpus_seed", "min_steps", "max_steps",
        "operand_min", "operand_max", "n_demos", "n_holdout",
        // policy
        "policy_order", "policy_window", "bag_feature", "role_features"};
    return keys;
}

struct ResolvedTrain {
    TrainConfig cfg;
    TrainInputs inputs;
    ArConfig policy_cfg;
    std::vector<std::pair<std::string, std::string>> extra_config;
};

inline ResolvedTrain resolve_train(const std::map<std::string, std::string>& kv) {
    ResolvedTrain rt;
    auto geti = [&kv](const std::string& key, long fallback) {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : to_long(it->second, key);
    };
    auto getd = [&kv](const std::string& key, double fallback) {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : to_double(it->second, key);
    };
    auto gets = [&kv](const std::string& key, const std::string& fallback) {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second;
    };

    TrainConfig& c = rt.cfg;
    const auto algo = algo_from_name(gets("algo", "dapo"));
    if (!algo) throw ConfigError("train: unknown algorithm '" + gets("algo", "") + "'");
    c.algo = *algo;
    c.clip = c.algo == Algo::Grpo ? ClipConfig::grpo() : ClipConfig::dapo();
    c.steps = static_cast<int>(geti("steps", 500));
    c.group_size = static_cast<int>(geti("group_size", 8));
    c.learning_rate = getd("learning_rate", 0.05);
    c.batch_questions = static_cast<int>(geti("batch_questions", 8));
    c.clip.eps_low = getd("eps_low", c.clip.eps_low);
    c.clip.eps_high = getd("eps_high", c.clip.eps_high);
    c.seed = static_cast<uint64_t>(geti("seed", 1));
    c.checkpoint_interval = static_cast<int>(geti("checkpoint_interval", 100));
    c.probe_interval = static_cast<int>(geti("probe_interval", 50));
    c.temperature = getd("temperature", 1.0);
    c.max_trace_len = static_cast<int>(geti("max_trace_len", 16));
    c.eval_k = static_cast<int>(geti("eval_k", 8));
    c.eval_questions = static_cast<int>(geti("eval_questions", 32));
    c.probe_questions = static_cast<int>(geti("probe_questions", 16));
    c.probe_rollouts = static_cast<int>(geti("probe_rollouts", 8));
    c.warm_start_epochs = static_cast<int>(geti("warm_start_epochs", 2));
    c.warm_start_lr = getd("warm_start_lr", 0.3);

    const Vocab vocab = Vocab::standard();
    if (kv.count("tasks") || kv.count("demos") || kv.count("holdout")) {
        if (!(kv.count("tasks") && kv.count("demos") && kv.count("holdout")))
            throw ConfigError("train: tasks, demos, and holdout files must be given together");
        rt.inputs.training = load_tasks(vocab, kv.at("tasks"));
        rt.inputs.demo_set = load_demo_set(vocab, kv.at("demos"));
        rt.inputs.held_out = load_demo_set(vocab, kv.at("holdout"));
        rt.extra_config = {{"tasks", kv.at("tasks")}, {"demos", kv.at("demos")},
                           {"holdout", kv.at("holdout")}};
    } else {
        TaskSpec spec;
        const auto fam = family_from_name(gets("family", "modular-chain"));
        if (!fam) throw ConfigError("train: unknown task family '" + gets("family", "") + "'");
        spec.family = *fam;
        spec.count = static_cast<int>(geti("count", 60));
        spec.seed = static_cast<uint64_t>(geti("corpus_seed", static_cast<long>(c.seed)));
        spec.min_steps = static_cast<int>(geti("min_steps", 1));
        spec.max_steps = static_cast<int>(geti("max_steps", 1));
        spec.operand_min = static_cast<int>(geti("operand_min", 0));
        spec.operand_max = static_cast<int>(geti("operand_max", 9));
        const int n_demos = static_cast<int>(geti("n_demos", 12));
        const int n_holdout = static_cast<int>(geti("n_holdout", 8));
        const std::vector<Task> tasks = gen_tasks(vocab, spec);
        DemoSplit split = build_demo_sets(tasks, n_demos, n_holdout, spec.seed);
        rt.inputs.training = std::move(split.training);
        rt.inputs.demo_set = std::move(split.demo_set);
        rt.inputs.held_out = std::move(split.held_out);
        rt.extra_config = {{"family", family_name(spec.family)},
                           {"count", std::to_string(spec.count)},
                           {"corpus_seed", std::to_string(spec.seed)},
                           {"min_steps", std::to_string(spec.min_steps)},
                           {"max_steps", std::to_string(spec.max_steps)},
                           {"operand_min", std::to_string(spec.operand_min)},
                           {"operand_max", std::to_string(spec.operand_max)},
                           {"n_demos", std::to_string(n_demos)},
                           {"n_holdout", std::to_string(n_holdout)}};
    }

    rt.policy_cfg.window = static_cast<int>(geti("policy_window", 64));
    rt.policy_cfg.order = static_cast<int>(geti("policy_order", 6));
    rt.policy_cfg.pairs = ArConfig::all_pairs(rt.policy_cfg.order);
    rt.policy_cfg.role_features = geti("role_features", 1) != 0;
    rt.policy_cfg.bag_feature = geti("bag_feature", 1) != 0;
    rt.extra_config.emplace_back("policy_window", std::to_string(rt.policy_cfg.window));
    rt.extra_config.emplace_back("policy_order", std::to_string(rt.policy_cfg.order));
    rt.extra_config.emplace_back("role_features", rt.policy_cfg.role_features ? "1" : "0");
    rt.extra_config.emplace_back("bag_feature", rt.policy_cfg.bag_feature ? "1" : "0");
    return rt;
}

}  // namespace detail

inline int cmd_train(const detail::Flags& flags) {
    std::map<std::string, std::string> kv;
    if (flags.has("config")) kv = parse_config_file(flags.get("config"), detail::train_config_keys());
    // command-line overrides
    if (flags.has("algo")) kv["algo"] = flags.get("algo");
    if (flags.has("steps")) kv["steps"] = flags.get("steps");
    if (flags.has("group-size")) kv["group_size"] = flags.get("group-size");
    if (flags.has("eps-low")) kv["eps_low"] = flags.get("eps-low");
    if (flags.has("eps-high")) kv["eps_high"] = flags.get("eps-high");
    if (flags.has("seed")) kv["seed"] = flags.get("seed");
    if (!kv.count("algo")) throw ConfigError("train: --algo (or an algo config key) is required");

    detail::ResolvedTrain rt = detail::resolve_train(kv);
    const std::string out_dir = flags.require("out");

    AutoregressivePolicy policy(Vocab::standard(), rt.policy_cfg);
    const TrainResult result = train(rt.cfg, rt.inputs, policy, out_dir, rt.extra_config);
    std::cout << "trained " << algo_name(rt.cfg.algo) << " for " << result.final_step
              << " steps: zero-shot avg@" << rt.cfg.eval_k << " " << result.initial_avg_at_k
              << " -> " << result.final_avg_at_k << "\nrun directory: " << out_dir << "\n";
    return 0;
}

// ---- analyze ------------------------------------------------------------------

inline int cmd_analyze(const detail::Flags& flags) {
    const std::string run_dir = flags.require("run");
    const std::map<std::string, std::string> kv =
        parse_config_file(run_dir + "/config", detail::train_config_keys());
    detail::ResolvedTrain rt = detail::resolve_train(kv);

    std::vector<std::pair<int, std::string>> checkpoints;
    for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("ckpt-", 0) == 0)
            checkpoints.emplace_back(static_cast<int>(detail::to_long(name.substr(5), "checkpoint step")),
                                     entry.path().string());
    }
    if (checkpoints.empty()) throw ConfigError("analyze: no checkpoints in " + run_dir);
    std::sort(checkpoints.begin(), checkpoints.end());

    const uint64_t seed = flags.has("seed")
                              ? static_cast<uint64_t>(detail::to_long(flags.get("seed"), "--seed"))
                              : rt.cfg.seed;
    const std::string out_path = flags.get("out", run_dir + "/dynamics.csv");
    std::ofstream out(out_path);
    if (!out) throw ConfigError("analyze: cannot open " + out_path);
    out << "step,n_total,n_correct,mean_delta_e0,mean_quality,spearman_rho\n";

    const Vocab vocab = Vocab::standard();
    const PromptLayout layout(vocab);
    for (const auto& [step, path] : checkpoints) {
        const AutoregressivePolicy policy = load_checkpoint(path);
        // fresh rng per checkpoint: every checkpoint sees the same query set
        Rng rng(derive_seed(seed, 0xd1aULL));
        const DynamicsRow row =
            dynamics_probe(policy, layout, vocab, rt.inputs.training, rt.inputs.held_out,
                           rt.cfg.probe_questions, rt.cfg.probe_rollouts, rt.cfg.temperature,
                           rt.cfg.max_trace_len, rng, step);
        out << row.step << "," << row.n_total << "," << row.n_correct << ",";
        if (row.has_data) {
            out << detail::fmt(row.mean_gain) << "," << detail::fmt(row.mean_quality) << ",";
            if (row.has_rho) out << detail::fmt(row.spearman_rho);
        } else {
            out << ",,";
        }
        out << "\n";
    }
    std::cout << "analyzed " << checkpoints.size() << " checkpoints -> " << out_path << "\n";
    return 0;
}

// ---- dispatch -----------------------------------------------------------------

inline int dispatch(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << kUsage;
        return 2;
    }
    const std::string sub = argv[1];
    try {
        if (sub == "gen-tasks") {
            return cmd_gen_tasks(detail::parse_flags(
                argc, argv, 2,
                {"out", "count", "family", "seed", "min-steps", "max-steps", "operand-min",
                 "operand-max", "window", "n-demos", "n-holdout"}));
        }
        if (sub == "verify") {
            return cmd_verify(detail::parse_flags(argc, argv, 2, {"suite", "sizes", "seed", "trials"}));
        }
        if (sub == "score") {
            return cmd_score(detail::parse_flags(
                argc, argv, 2, {"tasks", "demos", "policy", "rollouts", "seed", "out"}));
        }
        if (sub == "train") {
            return cmd_train(detail::parse_flags(
                argc, argv, 2,
                {"algo", "config", "out", "steps", "group-size", "eps-low", "eps-high", "seed"}));
        }
        if (sub == "analyze") {
            return cmd_analyze(detail::parse_flags(argc, argv, 2, {"run", "out", "seed"}));
        }
        std::cerr << "unknown subcommand '" << sub << "'\n" << kUsage;
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace icr::cli
