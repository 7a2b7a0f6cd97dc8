#pragma once
// Policy-gradient training: GRPO (symmetric clipping), DAPO (clip-higher plus
// dynamic filtering of zero-variance groups), and IC-DAPO (DAPO with one
// demonstration sampled from E and prepended to every rollout context).
// Evaluation is always zero-shot.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "icrlvr/analysis.hpp"
#include "icrlvr/autoregressive.hpp"
#include "icrlvr/core.hpp"
#include "icrlvr/corpus.hpp"
#include "icrlvr/layout.hpp"
#include "icrlvr/stats.hpp"

namespace icr {

enum class Algo { Grpo, Dapo, IcDapo };

inline std::string algo_name(Algo a) {
    switch (a) {
        case Algo::Grpo: return "grpo";
        case Algo::Dapo: return "dapo";
        case Algo::IcDapo: return "ic-dapo";
    }
    return "?";
}

inline std::optional<Algo> algo_from_name(const std::string& s) {
    if (s == "grpo") return Algo::Grpo;
    if (s == "dapo") return Algo::Dapo;
    if (s == "ic-dapo") return Algo::IcDapo;
    return std::nullopt;
}

struct ClipConfig {
    double eps_low = 0.2;
    double eps_high = 0.28;

    void validate() const {
        if (!(eps_low > 0.0 && eps_low <= eps_high && eps_high < 1.0))
            throw ConfigError("ClipConfig: need 0 < eps_low <= eps_high < 1");
    }

    static ClipConfig grpo() { return {0.2, 0.2}; }
    static ClipConfig dapo() { return {0.2, 0.28}; }
};

struct TrainConfig {
    Algo algo = Algo::Dapo;
    int group_size = 8;
    double learning_rate = 0.05;
    int steps = 500;
    int batch_questions = 8;
    ClipConfig clip;
    uint64_t seed = 1;
    int checkpoint_interval = 100;
    int probe_interval = 50;
    double temperature = 1.0;
    int max_trace_len = 24;
    int eval_k = 8;
    int eval_questions = 32;
    int probe_questions = 16;
    int probe_rollouts = 8;
    int warm_start_epochs = 0;   // supervised warm start on canonical traces
    double warm_start_lr = 0.1;

    void validate(bool has_demo_set) const {
        clip.validate();
        if (group_size < 2) throw ConfigError("TrainConfig: group size must be >= 2");
        if (learning_rate <= 0.0) throw ConfigError("TrainConfig: learning rate must be positive");
        if (steps < 0 || batch_questions < 1) throw ConfigError("TrainConfig: bad step/batch counts");
        if (algo == Algo::IcDapo && !has_demo_set)
            throw ConfigError("TrainConfig: ic-dapo requires a non-empty demonstration set");
        if (eval_k < 1) throw ConfigError("TrainConfig: eval_k must be >= 1");
        if (max_trace_len < 1) throw ConfigError("TrainConfig: max_trace_len must be >= 1");
        if (temperature <= 0.0) throw ConfigError("TrainConfig: temperature must be positive");
    }
};

struct RolloutGroup {
    Sequence question;
    std::optional<Demonstration> demo;
    Sequence context;  // rendered rollout context shared by the group
    std::vector<Sequence> traces;
    std::vector<double> rewards;
    std::vector<std::vector<double>> old_logprobs;  // per token, at sampling time
    std::vector<double> advantages;
};

// Group-normalized advantages: (R - mean) / (population std + 1e-8).
// All-equal groups come out exactly zero.
inline std::vector<double> group_advantages(std::span<const double> rewards) {
    if (rewards.size() < 2) throw std::invalid_argument("group_advantages: need G >= 2");
    const double m = stats::mean(rewards);
    const double sd = std::sqrt(stats::variance(rewards));
    std::vector<double> out(rewards.size());
    for (size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - m) / (sd + 1e-8);
    return out;
}

inline RolloutGroup rollout_group(const AutoregressivePolicy& policy, const PromptLayout& layout,
                                  const Vocab& vocab, const Sequence& question,
                                  const std::optional<Demonstration>& demo, int group_size,
                                  double temperature, int max_len, Rng& rng) {
    if (group_size < 2) throw std::invalid_argument("rollout_group: need G >= 2");
    RolloutGroup g;
    g.question = question;
    g.demo = demo;
    g.context = demo ? layout.conditioned(demo->question, demo->reference, question)
                     : layout.zero_shot(question);
    if (static_cast<int>(g.context.size()) + max_len > policy.config().window &&
        static_cast<int>(g.context.size()) >= policy.config().window)
        throw WindowOverflowError("rollout_group: demonstration plus question exceed the window");
    for (int i = 0; i < group_size; ++i) {
        SampleResult s = policy.sample(g.context, max_len, temperature, rng);
        g.rewards.push_back(static_cast<double>(verify(vocab, question, s.trace)));
        g.traces.push_back(std::move(s.trace));
        g.old_logprobs.push_back(std::move(s.token_logprobs));
    }
    g.advantages = group_advantages(g.rewards);
    return g;
}

struct UpdateStats {
    long tokens = 0;           // tokens contributing to the surrogate mean
    long clipped_tokens = 0;   // tokens on the clipped branch (no gradient)
    double clipped_fraction = 0.0;
    double mean_ratio = 1.0;
    int dropped_groups = 0;    // zero-variance groups removed by filtering
    bool no_op = false;        // everything filtered: parameters untouched
};

// One ascent step on the token-mean clipped surrogate
//   min(ratio * A, clamp(ratio, 1-eps_low, 1+eps_high) * A)
// over all (remaining) groups. With dynamic filtering, groups whose rewards
// have zero variance are dropped before the update.
inline UpdateStats clipped_update(AutoregressivePolicy& policy, std::span<const RolloutGroup> groups,
                                  const ClipConfig& clip, double learning_rate, bool dynamic_filter) {
    clip.validate();
    if (groups.empty()) throw std::invalid_argument("clipped_update: no rollout groups");

    UpdateStats stats;
    std::vector<const RolloutGroup*> active;
    for (const RolloutGroup& g : groups) {
        bool zero_variance = true;
        for (double r : g.rewards)
            if (r != g.rewards.front()) zero_variance = false;
        if (dynamic_filter && zero_variance) {
            ++stats.dropped_groups;
        } else {
            active.push_back(&g);
        }
    }
    if (active.empty()) {
        stats.no_op = true;
        return stats;
    }

    std::vector<double> grad(policy.param_count(), 0.0);
    double ratio_sum = 0.0;
    const double lo = 1.0 - clip.eps_low;
    const double hi = 1.0 + clip.eps_high;

    for (const RolloutGroup* g : active) {
        for (size_t i = 0; i < g->traces.size(); ++i) {
            const Sequence& trace = g->traces[i];
            if (trace.empty()) continue;
            const double adv = g->advantages[i];
            const std::vector<double> new_lp = policy.per_token_logprobs(g->context, trace);
            std::vector<double> weights(trace.size(), 0.0);
            for (size_t t = 0; t < trace.size(); ++t) {
                const double ratio = std::exp(new_lp[t] - g->old_logprobs[i][t]);
                ratio_sum += ratio;
                ++stats.tokens;
                const double surr_plain = ratio * adv;
                const double surr_clip = std::clamp(ratio, lo, hi) * adv;
                if (surr_plain <= surr_clip) {
                    weights[t] = adv * ratio;  // d/dtheta (ratio * A) = A * ratio * dlogpi
                } else {
                    ++stats.clipped_tokens;  // flat branch, no gradient
                }
            }
            policy.accumulate_weighted_grad(g->context, trace, weights, grad);
        }
    }
    if (stats.tokens == 0) {
        stats.no_op = true;
        return stats;
    }
    const double scale = learning_rate / static_cast<double>(stats.tokens);
    for (size_t i = 0; i < grad.size(); ++i) policy.theta()[i] += scale * grad[i];
    stats.mean_ratio = ratio_sum / static_cast<double>(stats.tokens);
    stats.clipped_fraction =
        static_cast<double>(stats.clipped_tokens) / static_cast<double>(stats.tokens);
    return stats;
}

struct EvalReport {
    std::vector<double> per_task;  // mean correctness over k samples
    double avg_at_k = 0.0;
    int k = 0;
    long contexts_checked = 0;  // structural demo-free assertions performed
};

// avg@k, strictly zero-shot: every context is asserted demonstration-free.
inline EvalReport evaluate_zero_shot(const AutoregressivePolicy& policy, const PromptLayout& layout,
                                     const Vocab& vocab, std::span<const Task> tasks, int k,
                                     double temperature, int max_len, Rng& rng) {
    if (k < 1) throw std::invalid_argument("evaluate_zero_shot: k must be >= 1");
    EvalReport rep;
    rep.k = k;
    for (const Task& task : tasks) {
        const Sequence ctx = layout.zero_shot(task.question);
        if (!layout.is_zero_shot_context(ctx, task.question))
            throw std::logic_error("evaluate_zero_shot: context contains demonstration tokens");
        ++rep.contexts_checked;
        int correct = 0;
        for (int i = 0; i < k; ++i)
            correct += verify(vocab, task.question, policy.sample(ctx, max_len, temperature, rng).trace);
        rep.per_task.push_back(static_cast<double>(correct) / static_cast<double>(k));
    }
    if (!rep.per_task.empty()) rep.avg_at_k = stats::mean(rep.per_task);
    return rep;
}

// Supervised warm start: SGD ascent on the mean per-token log-likelihood of
// canonical traces. The RL runs start from this, mirroring fine-tuning a
// pretrained base model. Half the examples are presented zero-shot and half
// behind a demonstration block, so the demonstration-conditioned context
// features start as competent as the bare ones (a base model has seen both
// formats in pretraining).
inline void warm_start(AutoregressivePolicy& policy, const PromptLayout& layout,
                       std::span<const Task> tasks, int epochs, double learning_rate, Rng& rng) {
    if (tasks.empty() || epochs < 1) return;
    std::vector<size_t> order(tasks.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> grad(policy.param_count());
    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t idx : order) {
            const Task& t = tasks[idx];
            Sequence ctx;
            if (tasks.size() > 1 && rng.uniform01() < 0.5) {
                size_t other = idx;
                while (other == idx)
                    other = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(tasks.size()) - 1));
                ctx = layout.conditioned(tasks[other].question, tasks[other].canonical, t.question);
            } else {
                ctx = layout.zero_shot(t.question);
            }
            std::fill(grad.begin(), grad.end(), 0.0);
            const std::vector<double> w(t.canonical.size(),
                                        1.0 / static_cast<double>(t.canonical.size()));
            policy.accumulate_weighted_grad(ctx, t.canonical, w, grad);
            for (size_t i = 0; i < grad.size(); ++i)
                policy.theta()[i] += learning_rate * grad[i];
        }
    }
}

struct TrainInputs {
    std::vector<Task> training;
    DemoSet demo_set;  // E (may be empty for grpo/dapo)
    DemoSet held_out;  // E0, used only by probes
};

struct TrainResult {
    int final_step = 0;
    double initial_avg_at_k = 0.0;
    double final_avg_at_k = 0.0;
    std::vector<DynamicsRow> probes;  // includes the step-0 probe
    long eval_contexts_checked = 0;
    std::string metrics_path;
};

namespace detail {

inline void require_question_disjoint(const TrainInputs& in) {
    std::set<Sequence> seen;
    auto add = [&seen](const Sequence& q, const char* where) {
        if (!seen.insert(q).second)
            throw ConfigError(std::string("train: question sets are not disjoint (") + where + ")");
    };
    for (const Task& t : in.training) add(t.question, "training");
    for (const Demonstration& d : in.demo_set.demos) add(d.question, "E");
    for (const Demonstration& d : in.held_out.demos) add(d.question, "E0");
}

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace detail

// Full training loop. Writes under out_dir:
//   config        resolved settings, key = value lines
//   metrics.csv   one row per step (probe columns filled at probe steps)
//   ckpt-<step>   policy checkpoints (step 0, every checkpoint_interval, final)
// Reproducible end-to-end from (config, seed).
inline TrainResult train(const TrainConfig& cfg, const TrainInputs& inputs,
                         AutoregressivePolicy& policy, const std::string& out_dir,
                         const std::vector<std::pair<std::string, std::string>>& extra_config = {}) {
    cfg.validate(!inputs.demo_set.demos.empty());
    if (inputs.training.empty()) throw ConfigError("train: empty training split");
    if (inputs.held_out.demos.empty()) throw ConfigError("train: empty held-out set E0");
    detail::require_question_disjoint(inputs);
    const Vocab& vocab = policy.vocab();
    for (const Demonstration& d : inputs.demo_set.demos)
        if (verify(vocab, d.question, d.reference) != 1)
            throw ConfigError("train: demonstration set contains a non-verifying reference");

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const PromptLayout layout(vocab);

    {
        std::ofstream cf(out_dir + "/config");
        cf << "format_version = 1\n";
        cf << "algo = " << algo_name(cfg.algo) << "\n";
        cf << "group_size = " << cfg.group_size << "\n";
        cf << "learning_rate = " << detail::format_double(cfg.learning_rate) << "\n";
        cf << "steps = " << cfg.steps << "\n";
        cf << "batch_questions = " << cfg.batch_questions << "\n";
        cf << "eps_low = " << detail::format_double(cfg.clip.eps_low) << "\n";
        cf << "eps_high = " << detail::format_double(cfg.clip.eps_high) << "\n";
        cf << "seed = " << cfg.seed << "\n";
        cf << "checkpoint_interval = " << cfg.checkpoint_interval << "\n";
        cf << "probe_interval = " << cfg.probe_interval << "\n";
        cf << "temperature = " << detail::format_double(cfg.temperature) << "\n";
        cf << "max_trace_len = " << cfg.max_trace_len << "\n";
        cf << "eval_k = " << cfg.eval_k << "\n";
        cf << "eval_questions = " << cfg.eval_questions << "\n";
        cf << "probe_questions = " << cfg.probe_questions << "\n";
        cf << "probe_rollouts = " << cfg.probe_rollouts << "\n";
        cf << "warm_start_epochs = " << cfg.warm_start_epochs << "\n";
        cf << "warm_start_lr = " << detail::format_double(cfg.warm_start_lr) << "\n";
        for (const auto& [key, value] : extra_config) cf << key << " = " << value << "\n";
        if (!cf) throw ConfigError("train: cannot write config snapshot in " + out_dir);
    }

    if (cfg.warm_start_epochs > 0) {
        Rng ws_rng(derive_seed(cfg.seed, 17));
        warm_start(policy, layout, inputs.training, cfg.warm_start_epochs, cfg.warm_start_lr, ws_rng);
    }
    save_checkpoint(policy, out_dir + "/ckpt-0");

    TrainResult result;
    result.metrics_path = out_dir + "/metrics.csv";
    std::ofstream metrics(result.metrics_path);
    metrics << "step,mean_reward,clipped_frac,dropped_groups,avg_at_k,mean_delta_e0,mean_quality,"
               "spearman_rho\n";

    // evaluation task sample, fixed across the run
    std::vector<Task> eval_tasks;
    {
        Rng pick(derive_seed(cfg.seed, 23));
        std::vector<size_t> order(inputs.training.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        pick.shuffle(order);
        const size_t n = std::min<size_t>(static_cast<size_t>(cfg.eval_questions), order.size());
        for (size_t i = 0; i < n; ++i) eval_tasks.push_back(inputs.training[order[i]]);
    }

    auto run_eval = [&](uint64_t stream) {
        Rng eval_rng(derive_seed(cfg.seed, stream));
        EvalReport rep = evaluate_zero_shot(policy, layout, vocab, eval_tasks, cfg.eval_k,
                                            cfg.temperature, cfg.max_trace_len, eval_rng);
        result.eval_contexts_checked += rep.contexts_checked;
        return rep.avg_at_k;
    };
    auto run_probe = [&](int step, uint64_t stream) {
        Rng probe_rng(derive_seed(cfg.seed, stream));
        DynamicsRow row = dynamics_probe(policy, layout, vocab, inputs.training, inputs.held_out,
                                         cfg.probe_questions, cfg.probe_rollouts, cfg.temperature,
                                         cfg.max_trace_len, probe_rng, step);
        result.eval_contexts_checked += row.contexts_checked;
        result.probes.push_back(row);
        return row;
    };

    result.initial_avg_at_k = run_eval(29);
    run_probe(0, 31);

    const bool dynamic_filter = cfg.algo != Algo::Grpo;
    for (int step = 1; step <= cfg.steps; ++step) {
        Rng step_rng(derive_seed(cfg.seed, 1000 + static_cast<uint64_t>(step)));

        double reward_sum = 0.0;
        long reward_count = 0;
        long tokens = 0, clipped = 0;
        int dropped = 0;
        // one optimizer epoch per rollout batch: sequential per-group updates,
        // so clipping engages as the parameters drift within the step
        for (int b = 0; b < cfg.batch_questions; ++b) {
            const Task& task = inputs.training[static_cast<size_t>(
                step_rng.uniform_int(0, static_cast<int>(inputs.training.size()) - 1))];
            std::optional<Demonstration> demo;
            if (cfg.algo == Algo::IcDapo) {
                const int di =
                    step_rng.uniform_int(0, static_cast<int>(inputs.demo_set.demos.size()) - 1);
                demo = inputs.demo_set.demos[static_cast<size_t>(di)];
            }
            RolloutGroup g = rollout_group(policy, layout, vocab, task.question, demo,
                                           cfg.group_size, cfg.temperature, cfg.max_trace_len,
                                           step_rng);
            for (double r : g.rewards) reward_sum += r;
            reward_count += static_cast<long>(g.rewards.size());
            const UpdateStats us =
                clipped_update(policy, std::span(&g, 1), cfg.clip, cfg.learning_rate, dynamic_filter);
            tokens += us.tokens;
            clipped += us.clipped_tokens;
            dropped += us.dropped_groups;
        }

        metrics << step << "," << detail::format_double(reward_sum / static_cast<double>(reward_count))
                << ","
                << detail::format_double(tokens > 0 ? static_cast<double>(clipped) / static_cast<double>(tokens)
                                                    : 0.0)
                << "," << dropped;

        const bool probe_now =
            (cfg.probe_interval > 0 && step % cfg.probe_interval == 0) || step == cfg.steps;
        if (probe_now) {
            const double avg = run_eval(3000 + static_cast<uint64_t>(step));
            const DynamicsRow row = run_probe(step, 5000 + static_cast<uint64_t>(step));
            metrics << "," << detail::format_double(avg);
            if (row.has_data) {
                metrics << "," << detail::format_double(row.mean_gain) << ","
                        << detail::format_double(row.mean_quality) << ",";
                if (row.has_rho) metrics << detail::format_double(row.spearman_rho);
            } else {
                metrics << ",,,";
            }
        } else {
            metrics << ",,,,";
        }
        metrics << "\n";

        if ((cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0) ||
            step == cfg.steps)
            save_checkpoint(policy, out_dir + "/ckpt-" + std::to_string(step));
    }
    metrics.flush();
    if (!metrics) throw ConfigError("train: failed writing metrics to " + result.metrics_path);

    result.final_step = cfg.steps;
    result.final_avg_at_k = cfg.steps > 0 ? run_eval(7001) : result.initial_avg_at_k;
    return result;
}

}  // namespace icr
