#pragma once

// The two-phase training loop and its ablations. Each iteration of the joint
// strategies first takes one model step on the weighted source + target loss
// under a frozen policy, then scores the updated model on a validation batch
// and feeds that reward back into the policy. Fine-tuning and scratch share a
// plain two-stage schedule instead.

#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "l2t/dataset.hpp"
#include "l2t/error.hpp"
#include "l2t/fmt.hpp"
#include "l2t/graph.hpp"
#include "l2t/metrics.hpp"
#include "l2t/model.hpp"
#include "l2t/optim.hpp"
#include "l2t/policy.hpp"
#include "l2t/rng.hpp"

namespace l2t {

enum class Strategy { L2tl, Finetune, Scratch, Uniform, RandomSearch };

inline std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::L2tl: return "l2tl";
        case Strategy::Finetune: return "finetune";
        case Strategy::Scratch: return "scratch";
        case Strategy::Uniform: return "uniform";
        case Strategy::RandomSearch: return "random-search";
    }
    return "?";
}

inline Strategy parse_strategy(const std::string& name) {
    if (name == "l2tl") return Strategy::L2tl;
    if (name == "finetune") return Strategy::Finetune;
    if (name == "scratch") return Strategy::Scratch;
    if (name == "uniform") return Strategy::Uniform;
    if (name == "random-search") return Strategy::RandomSearch;
    throw ConfigError("unknown strategy '" + name +
                      "' (expected l2tl, finetune, scratch, uniform or random-search)");
}

struct TrainConfig {
    Strategy strategy = Strategy::L2tl;
    std::size_t iterations = 3000;             // N
    std::size_t batch_source = 64;             // B_S
    std::size_t batch_target = 64;             // B_T
    std::size_t batch_reward = 256;            // B_P
    std::size_t batch_multiplier = 5;          // M_S
    std::size_t finetune_source_steps = 1500;  // N_S

    double model_lr = 0.01;
    std::size_t warmup_steps = 200;
    ScheduleKind schedule = ScheduleKind::CosineWarmup;

    double policy_lr = 1e-4;
    ScheduleKind policy_schedule = ScheduleKind::Constant;
    std::size_t policy_warmup_steps = 0;
    std::size_t weight_bins = 11;  // n
    std::size_t alpha_bins = 100;  // n'
    double alpha_range = 0.5;      // beta
    double baseline_decay = 0.05;  // gamma

    MetricKind reward_metric = MetricKind::Top1Accuracy;
    std::size_t eval_every = 50;  // 0 disables periodic eval
    bool replay_final_training = false;
    std::uint64_t seed = 1;

    void validate() const {
        if (batch_source == 0 || batch_target == 0 || batch_reward == 0)
            throw ConfigError("train: batch sizes must be positive");
        if (batch_multiplier == 0) throw ConfigError("train: batch multiplier must be >= 1");
        if (model_lr <= 0 || policy_lr <= 0) throw ConfigError("train: lrs must be positive");
        if (weight_bins < 2) throw ConfigError("train: need at least 2 weight bins");
        if (alpha_bins < 1) throw ConfigError("train: need at least 1 alpha bin");
        if (alpha_range <= 0) throw ConfigError("train: alpha range must be positive");
        if (baseline_decay <= 0 || baseline_decay > 1)
            throw ConfigError("train: baseline decay must be in (0, 1]");
        if (iterations == 0) return;
        const std::size_t ns = strategy == Strategy::Finetune ? finetune_source_steps : 0;
        if (strategy == Strategy::Finetune && ns >= iterations)
            throw ConfigError("train: finetune source steps must be < iterations");
        if (ns > 0 && warmup_steps >= ns)
            throw ConfigError("train: warmup must be shorter than the source phase");
        if (warmup_steps >= iterations - ns)
            throw ConfigError("train: warmup must be shorter than the training phase");
        if (policy_warmup_steps >= iterations)
            throw ConfigError("train: policy warmup must be shorter than the run");
    }
};

struct TraceRecord {
    std::size_t iteration = 0;
    double loss_source = 0.0;  // alpha_s-scaled, lambda-weighted source sum
    double loss_target = 0.0;  // target sum
    double alpha = 0.0;        // alpha_s in effect
    bool has_policy = false;
    double reward = 0.0;
    double baseline = 0.0;  // value the advantage was computed against
    double advantage = 0.0;
    double lr = 0.0;
    bool has_eval = false;
    double eval_metric = 0.0;
    // mean of the per-class weights sampled this iteration (1.0 under uniform
    // weighting); kept in memory only, not part of the CSV schema
    double lambda_mean = 1.0;
};

struct TrainTrace {
    std::vector<TraceRecord> records;
};

struct TrainedModel {
    Model model;
    PolicyParams policy;  // valid when has_policy
    bool has_policy = false;
    TrainTrace trace;
};

// alpha_s * sum_j lambda_j L_S(f_S(x_j), y_j) + alpha_t * sum_k L_T(f_T(x'_k), y'_k)
// Either side may be absent (pass nullptr).
struct JointLoss {
    Var total;
    double source_term = 0.0;
    double target_term = 0.0;
};

inline JointLoss joint_loss(Graph& g, const Model& model, const Model::Bound& bound,
                            const Batch* source, const std::vector<double>* lambda,
                            double alpha_s, const Batch* target, double alpha_t) {
    if (alpha_s < 0 || alpha_t < 0) throw Error("joint_loss: scales must be non-negative");
    JointLoss out;
    Var total = g.constant(Tensor::scalar(0.0));
    if (source != nullptr) {
        if (lambda == nullptr || lambda->size() != source->size())
            throw Error("joint_loss: lambda length " +
                        std::to_string(lambda == nullptr ? 0 : lambda->size()) +
                        " does not match source batch " + std::to_string(source->size()));
        Var x = g.input(source->features);
        Var logits = model.source_logits(g, bound, model.encode(g, bound, x));
        Var losses = Model::per_example_loss(g, logits, source->labels);
        Var weighted = g.mul(losses, g.constant(Tensor({lambda->size()}, *lambda)));
        Var term = g.scale(g.sum(weighted), alpha_s);
        out.source_term = g.scalar(term);
        total = g.add(total, term);
    }
    if (target != nullptr) {
        Var x = g.input(target->features);
        Var logits = model.target_logits(g, bound, model.encode(g, bound, x));
        Var term = g.scale(g.sum(Model::per_example_loss(g, logits, target->labels)), alpha_t);
        out.target_term = g.scalar(term);
        total = g.add(total, term);
    }
    out.total = total;
    return out;
}

// Indices of the `keep` highest weights; every kept weight >= every discarded
// one, ties broken by ascending position. Returned in ascending position.
inline std::vector<std::size_t> select_top_weighted(const std::vector<double>& weights,
                                                    std::size_t keep) {
    if (keep > weights.size())
        throw Error("select_top_weighted: keep " + std::to_string(keep) + " of " +
                    std::to_string(weights.size()));
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
    order.resize(keep);
    std::sort(order.begin(), order.end());
    return order;
}

namespace train_detail {

// Rethrows numeric failures with the iteration attached; the harness adds
// strategy and seed on top.
[[noreturn]] inline void rethrow_with_iteration(const NumericError& e, std::size_t iteration) {
    std::string msg = e.what();
    const std::string prefix = "numeric failure: ";
    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
    throw NumericError("iteration " + std::to_string(iteration) + ": " + msg);
}

struct Streams {
    Rng policy, source, target, reward, random_bins, head_reinit, replay;
    std::uint64_t model_init;
    std::uint64_t replay_model_init;

    explicit Streams(std::uint64_t seed) {
        Rng master(seed);
        model_init = master.next_u64();
        policy = master.fork(2);
        source = master.fork(3);
        target = master.fork(4);
        reward = master.fork(5);
        random_bins = master.fork(6);
        head_reinit = master.fork(7);
        replay = master.fork(8);
        replay_model_init = master.next_u64();
    }
};

inline double eval_metric(const Model& model, MetricKind kind, const LabeledDataset& ds) {
    Batch b = full_batch(ds);
    return reward_from_logits(kind, model.eval_target_logits(b), b.labels);
}

inline LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
    LabeledDataset out = a;
    out.name = a.name + "+" + b.name;
    out.features.insert(out.features.end(), b.features.begin(), b.features.end());
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    out.validate();
    return out;
}

// Phase 1 of one joint iteration: sample weights under the frozen policy,
// oversample source candidates, keep the top batch, take one model step.
struct JointStepOutcome {
    double source_term = 0.0;
    double target_term = 0.0;
    double alpha_s = 0.0;
};

inline JointStepOutcome joint_model_step(Model& model, SgdMomentum& opt, double lr,
                                         const TrainConfig& cfg, const LabeledDataset& source,
                                         const LabeledDataset& target, const Action& action,
                                         const std::vector<std::size_t>* random_bins,
                                         Streams& streams) {
    const bool uniform = action.weight_bins.empty() && random_bins == nullptr;
    const std::size_t n = cfg.weight_bins;

    std::vector<std::size_t> batch_idx;
    std::vector<double> lambda;
    if (uniform) {
        // constant weight, no oversampling: the multiplier is treated as 1
        batch_idx = sample_indices(source, cfg.batch_source, streams.source);
        lambda.assign(cfg.batch_source, 1.0);
    } else {
        const std::vector<std::size_t>& bins =
            random_bins != nullptr ? *random_bins : action.weight_bins;
        const std::size_t candidates = cfg.batch_multiplier * cfg.batch_source;
        std::vector<std::size_t> cand_idx = sample_indices(source, candidates, streams.source);
        std::vector<double> cand_lambda(candidates);
        for (std::size_t j = 0; j < candidates; ++j)
            cand_lambda[j] = weight_of(bins[source.labels[cand_idx[j]]], n);
        for (std::size_t j : select_top_weighted(cand_lambda, cfg.batch_source)) {
            batch_idx.push_back(cand_idx[j]);
            lambda.push_back(cand_lambda[j]);
        }
    }
    Batch src_batch = make_batch(source, batch_idx);
    Batch tgt_batch = sample_batch(target, cfg.batch_target, streams.target);
    const double alpha_s = alpha_of(action.alpha_bin, cfg.alpha_bins, cfg.alpha_range);

    Graph g;
    Model::Bound bound = model.bind(g, true);
    JointLoss loss = joint_loss(g, model, bound, &src_batch, &lambda, alpha_s, &tgt_batch, 1.0);
    Var total = loss.total;
    if (model.config().weight_decay > 0)
        total = g.add(total, model.decay_term(g, bound, true, true));
    g.backward(total);
    opt.step(model.parameters(), model.bound_grads(g, bound), lr);
    return {loss.source_term, loss.target_term, alpha_s};
}

inline TrainedModel train_joint(const ModelConfig& model_cfg, const TrainConfig& cfg,
                                const SplitSet& source, const SplitSet& target) {
    Streams streams(cfg.seed);
    ModelConfig mcfg = model_cfg;
    mcfg.init_seed = model_cfg.init_seed ^ streams.model_init;
    mcfg.source_classes = source.train.num_classes;
    mcfg.target_classes = target.train.num_classes;

    TrainedModel out{Model(mcfg), init_policy(source.train.num_classes, cfg.weight_bins,
                                              cfg.alpha_bins, cfg.alpha_range),
                     true, {}};
    if (cfg.iterations == 0) return out;
    if (target.val.size() == 0) throw DataError("training needs a non-empty validation split");

    SgdMomentum model_opt;
    Adam policy_opt;
    BaselineState baseline{0.0, cfg.baseline_decay, false};
    LrSchedule sched(cfg.schedule, cfg.model_lr, cfg.warmup_steps, cfg.iterations);
    LrSchedule policy_sched(cfg.policy_schedule, cfg.policy_lr, cfg.policy_warmup_steps,
                            cfg.iterations);

    for (std::size_t i = 1; i <= cfg.iterations; ++i) {
        try {
        const double lr = sched.at(i);

        // phase 1: model step under frozen policy
        Action action;
        std::vector<std::size_t> random_bins;
        const std::vector<std::size_t>* bins_ptr = nullptr;
        switch (cfg.strategy) {
            case Strategy::L2tl:
                action = sample_action(out.policy, streams.policy);
                break;
            case Strategy::Uniform:
                action = sample_alpha_only(out.policy, streams.policy);
                break;
            case Strategy::RandomSearch:
                action = sample_alpha_only(out.policy, streams.policy);
                random_bins.resize(source.train.num_classes);
                for (auto& b : random_bins) b = streams.random_bins.index(cfg.weight_bins);
                bins_ptr = &random_bins;
                break;
            default:
                throw Error("train_joint: not a joint strategy");
        }
        double lambda_mean = 1.0;
        if (cfg.strategy != Strategy::Uniform) {
            const std::vector<std::size_t>& bins =
                bins_ptr != nullptr ? *bins_ptr : action.weight_bins;
            lambda_mean = 0.0;
            for (std::size_t b : bins) lambda_mean += weight_of(b, cfg.weight_bins);
            lambda_mean /= static_cast<double>(bins.size());
        }
        JointStepOutcome step = joint_model_step(out.model, model_opt, lr, cfg, source.train,
                                                 target.train, action, bins_ptr, streams);

        // phase 2: reward on a fresh validation batch, policy step, baseline
        Batch rbatch = sample_batch(target.val, cfg.batch_reward, streams.reward);
        const double reward =
            reward_from_logits(cfg.reward_metric, out.model.eval_target_logits(rbatch),
                               rbatch.labels);
        const double baseline_used = baseline.value;
        const double advantage = reward - baseline_used;
        reinforce_update(out.policy, {action}, {reward}, baseline, policy_opt,
                         policy_sched.at(i));
        update_baseline(baseline, reward);

        TraceRecord rec{i,      step.source_term, step.target_term, step.alpha_s, true,
                        reward, baseline_used,    advantage,        lr,           false,
                        0.0,    lambda_mean};
        if (cfg.eval_every > 0 && i % cfg.eval_every == 0) {
            rec.has_eval = true;
            rec.eval_metric = eval_metric(out.model, cfg.reward_metric, target.val);
        }
        out.trace.records.push_back(rec);
        } catch (const NumericError& e) {
            rethrow_with_iteration(e, i);
        }
    }

    // optional replay: retrain a fresh model on target train+val with the
    // learned policy frozen
    if (cfg.replay_final_training) {
        ModelConfig rcfg = mcfg;
        rcfg.init_seed = model_cfg.init_seed ^ streams.replay_model_init;
        Model replay_model(rcfg);
        SgdMomentum replay_opt;
        LrSchedule replay_sched(cfg.schedule, cfg.model_lr, cfg.warmup_steps, cfg.iterations);
        LabeledDataset combined = concat(target.train, target.val);
        Streams replay_streams(streams.replay.next_u64());
        for (std::size_t i = 1; i <= cfg.iterations; ++i) {
            Action action;
            const std::vector<std::size_t>* bins_ptr = nullptr;
            std::vector<std::size_t> random_bins;
            switch (cfg.strategy) {
                case Strategy::L2tl:
                    action = sample_action(out.policy, replay_streams.policy);
                    break;
                case Strategy::Uniform:
                    action = sample_alpha_only(out.policy, replay_streams.policy);
                    break;
                default:
                    action = sample_alpha_only(out.policy, replay_streams.policy);
                    random_bins.resize(source.train.num_classes);
                    for (auto& b : random_bins)
                        b = replay_streams.random_bins.index(cfg.weight_bins);
                    bins_ptr = &random_bins;
                    break;
            }
            joint_model_step(replay_model, replay_opt, replay_sched.at(i), cfg, source.train,
                             combined, action, bins_ptr, replay_streams);
        }
        out.model = std::move(replay_model);
    }
    return out;
}

// Two-stage schedule: source-only for the first finetune_source_steps, then
// target-only with a freshly initialized target head, fresh optimizer state
// and a fresh lr schedule. Scratch is the degenerate case with no source
// phase at all.
inline TrainedModel train_staged(const ModelConfig& model_cfg, const TrainConfig& cfg,
                                 const SplitSet& source, const SplitSet& target) {
    Streams streams(cfg.seed);
    ModelConfig mcfg = model_cfg;
    mcfg.init_seed = model_cfg.init_seed ^ streams.model_init;
    if (cfg.strategy == Strategy::Finetune) mcfg.source_classes = source.train.num_classes;
    mcfg.target_classes = target.train.num_classes;

    TrainedModel out{Model(mcfg), PolicyParams{}, false, {}};
    if (cfg.iterations == 0) return out;

    const std::size_t source_steps =
        cfg.strategy == Strategy::Finetune ? cfg.finetune_source_steps : 0;
    SgdMomentum opt;

    for (std::size_t i = 1; i <= cfg.iterations; ++i) {
        try {
        const bool source_phase = i <= source_steps;
        if (i == source_steps + 1) {
            // target stage begins: new head, optimizer and schedule
            out.model.reinit_target_head(streams.head_reinit.next_u64());
            opt = SgdMomentum();
        }

        double lr, l_s = 0.0, l_t = 0.0;
        Graph g;
        Model::Bound bound = out.model.bind(g, true);
        if (source_phase) {
            LrSchedule sched(cfg.schedule, cfg.model_lr, cfg.warmup_steps, source_steps);
            lr = sched.at(i);
            Batch b = sample_batch(source.train, cfg.batch_source, streams.source);
            std::vector<double> lambda(b.size(), 1.0);
            JointLoss loss = joint_loss(g, out.model, bound, &b, &lambda, 1.0, nullptr, 0.0);
            Var total = loss.total;
            if (mcfg.weight_decay > 0)
                total = g.add(total, out.model.decay_term(g, bound, true, false));
            g.backward(total);
            l_s = loss.source_term;
        } else {
            LrSchedule sched(cfg.schedule, cfg.model_lr, cfg.warmup_steps,
                             cfg.iterations - source_steps);
            lr = sched.at(i - source_steps);
            Batch b = sample_batch(target.train, cfg.batch_target, streams.target);
            JointLoss loss = joint_loss(g, out.model, bound, nullptr, nullptr, 0.0, &b, 1.0);
            Var total = loss.total;
            if (mcfg.weight_decay > 0)
                total = g.add(total, out.model.decay_term(g, bound, false, true));
            g.backward(total);
            l_t = loss.target_term;
        }
        opt.step(out.model.parameters(), out.model.bound_grads(g, bound), lr);

        TraceRecord rec{i,   l_s, l_t, source_phase ? 1.0 : 0.0, false, 0.0,
                        0.0, 0.0, lr,  false,                    0.0,   1.0};
        if (cfg.eval_every > 0 && i % cfg.eval_every == 0) {
            rec.has_eval = true;
            rec.eval_metric = eval_metric(out.model, cfg.reward_metric, target.val);
        }
        out.trace.records.push_back(rec);
        } catch (const NumericError& e) {
            rethrow_with_iteration(e, i);
        }
    }
    return out;
}

} // namespace train_detail

// Dispatch on the configured strategy. `source` is ignored by scratch.
inline TrainedModel train(const ModelConfig& model_cfg, const TrainConfig& cfg,
                          const SplitSet& source, const SplitSet& target) {
    cfg.validate();
    switch (cfg.strategy) {
        case Strategy::L2tl:
        case Strategy::Uniform:
        case Strategy::RandomSearch:
            return train_detail::train_joint(model_cfg, cfg, source, target);
        case Strategy::Finetune:
            return train_detail::train_staged(model_cfg, cfg, source, target);
        case Strategy::Scratch: {
            TrainConfig c = cfg;
            c.finetune_source_steps = 0;
            return train_detail::train_staged(model_cfg, c, source, target);
        }
    }
    throw Error("train: unknown strategy");
}

inline TrainedModel l2tl_train(const ModelConfig& mc, const TrainConfig& cfg,
                               const SplitSet& source, const SplitSet& target) {
    TrainConfig c = cfg;
    c.strategy = Strategy::L2tl;
    return train(mc, c, source, target);
}

inline TrainedModel finetune_train(const ModelConfig& mc, const TrainConfig& cfg,
                                   const SplitSet& source, const SplitSet& target) {
    TrainConfig c = cfg;
    c.strategy = Strategy::Finetune;
    return train(mc, c, source, target);
}

inline TrainedModel scratch_train(const ModelConfig& mc, const TrainConfig& cfg,
                                  const SplitSet& target) {
    TrainConfig c = cfg;
    c.strategy = Strategy::Scratch;
    return train(mc, c, SplitSet{}, target);
}

inline TrainedModel uniform_weight_train(const ModelConfig& mc, const TrainConfig& cfg,
                                         const SplitSet& source, const SplitSet& target) {
    TrainConfig c = cfg;
    c.strategy = Strategy::Uniform;
    return train(mc, c, source, target);
}

inline TrainedModel random_search_train(const ModelConfig& mc, const TrainConfig& cfg,
                                        const SplitSet& source, const SplitSet& target) {
    TrainConfig c = cfg;
    c.strategy = Strategy::RandomSearch;
    return train(mc, c, source, target);
}

// ---- trace CSV -------------------------------------------------------------

inline void write_trace_csv(const TrainTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write trace '" + path + "'");
    out << "iteration,l_s,l_t,alpha,reward,baseline,advantage,lr,eval_metric\n";
    for (const TraceRecord& r : trace.records) {
        out << r.iteration << "," << format_double(r.loss_source) << ","
            << format_double(r.loss_target) << "," << format_double(r.alpha) << ",";
        if (r.has_policy)
            out << format_double(r.reward) << "," << format_double(r.baseline) << ","
                << format_double(r.advantage);
        else
            out << ",,";
        out << "," << format_double(r.lr) << ",";
        if (r.has_eval) out << format_double(r.eval_metric);
        out << "\n";
    }
}

inline TrainTrace read_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read trace '" + path + "'");
    std::string line;
    if (!std::getline(in, line) ||
        line != "iteration,l_s,l_t,alpha,reward,baseline,advantage,lr,eval_metric")
        throw DataError("'" + path + "' is not a trace CSV");
    TrainTrace trace;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        while (fields.size() < 9) fields.emplace_back();
        if (fields.size() != 9)
            throw DataError("'" + path + "' line " + std::to_string(lineno) + ": expected 9 " +
                            "fields, got " + std::to_string(fields.size()));
        TraceRecord r;
        r.iteration = std::stoull(fields[0]);
        r.loss_source = std::stod(fields[1]);
        r.loss_target = std::stod(fields[2]);
        r.alpha = std::stod(fields[3]);
        r.has_policy = !fields[4].empty();
        if (r.has_policy) {
            r.reward = std::stod(fields[4]);
            r.baseline = std::stod(fields[5]);
            r.advantage = std::stod(fields[6]);
        }
        r.lr = std::stod(fields[7]);
        r.has_eval = !fields[8].empty();
        if (r.has_eval) r.eval_metric = std::stod(fields[8]);
        trace.records.push_back(r);
    }
    return trace;
}

} // namespace l2t
