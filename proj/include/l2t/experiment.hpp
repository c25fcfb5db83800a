#pragma once

// Config-driven experiment runner: executes every (strategy, seed) pair,
// writes traces, checkpoints, rankings, comparison tables and plots under the
// configured output directory. Nothing is written until the config and its
// datasets have validated.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "l2t/config.hpp"
#include "l2t/dataset.hpp"
#include "l2t/idx.hpp"
#include "l2t/report.hpp"
#include "l2t/synthetic.hpp"
#include "l2t/trainer.hpp"

namespace l2t {

struct ExperimentData {
    SplitSet source, target;
};

namespace exp_detail {

// Target pool -> k train + v val examples per class, drawn without
// replacement from a seeded shuffle; the test split comes from its own files.
inline SplitSet split_idx_target(const LabeledDataset& pool, LabeledDataset test,
                                 std::size_t train_per_class, std::size_t val_per_class,
                                 std::uint64_t seed) {
    Rng rng(seed);
    auto by_class = detail::indices_by_class(pool);
    std::vector<std::size_t> train_idx, val_idx;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& idx = by_class[c];
        if (idx.size() < train_per_class + val_per_class)
            throw DataError("target class " + std::to_string(c) + " has " +
                            std::to_string(idx.size()) + " examples, needs " +
                            std::to_string(train_per_class + val_per_class) +
                            " for train+val subsampling");
        detail::shuffle(idx, rng);
        for (std::size_t i = 0; i < train_per_class; ++i) train_idx.push_back(idx[i]);
        for (std::size_t i = 0; i < val_per_class; ++i) val_idx.push_back(idx[train_per_class + i]);
    }
    SplitSet out{detail::take(pool, std::move(train_idx), "/train"),
                 detail::take(pool, std::move(val_idx), "/val"), std::move(test)};
    const std::size_t classes =
        std::max({out.train.num_classes, out.val.num_classes, out.test.num_classes});
    out.train.num_classes = out.val.num_classes = out.test.num_classes = classes;
    return out;
}

inline Tensor eval_logits_chunked(const Model& model, const LabeledDataset& ds,
                                  std::size_t chunk = 512) {
    Tensor logits({ds.size(), model.config().target_classes});
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < ds.size(); start += chunk) {
        const std::size_t end = std::min(ds.size(), start + chunk);
        idx.clear();
        for (std::size_t i = start; i < end; ++i) idx.push_back(i);
        const Tensor part = model.eval_target_logits(make_batch(ds, idx));
        std::copy(part.values().begin(), part.values().end(),
                  logits.data() + start * logits.dim(1));
    }
    return logits;
}

inline std::string timestamp_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[64];
    std::strftime(buf, sizeof(buf), "%Y-%m-%d %H:%M:%S", std::gmtime(&t));
    return buf;
}

} // namespace exp_detail

inline ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
    ExperimentData data;
    if (cfg.dataset_kind == DatasetKind::Synthetic) {
        SyntheticPair pair = make_synthetic_transfer_pair(cfg.synthetic);
        data.source = std::move(pair.source);
        data.target = std::move(pair.target);
    } else {
        data.source.train = load_idx(cfg.idx.source_images, cfg.idx.source_labels, "source");
        data.source.val.num_classes = data.source.train.num_classes;
        data.source.test.num_classes = data.source.train.num_classes;
        LabeledDataset pool = load_idx(cfg.idx.target_images, cfg.idx.target_labels, "target");
        LabeledDataset test =
            load_idx(cfg.idx.target_test_images, cfg.idx.target_test_labels, "target/test");
        data.target = exp_detail::split_idx_target(pool, std::move(test),
                                                   cfg.idx.subsample_per_class,
                                                   cfg.idx.val_per_class, cfg.idx.split_seed);
        if (data.source.train.feature_shape != data.target.train.feature_shape)
            throw DataError("source features " + shape_str(data.source.train.feature_shape) +
                            " and target features " +
                            shape_str(data.target.train.feature_shape) +
                            " must share one shape (the encoder is shared)");
    }
    return data;
}

// L2T_OUTPUT_ROOT, when set, re-roots relative output directories.
inline std::filesystem::path resolve_output_dir(const std::string& output_dir) {
    std::filesystem::path p(output_dir);
    const char* root = std::getenv("L2T_OUTPUT_ROOT");
    if (root != nullptr && *root != '\0' && p.is_relative())
        return std::filesystem::path(root) / p;
    return p;
}

inline RunReport run_experiment(const std::string& config_path) {
    const ExperimentConfig cfg = parse_experiment_config(config_path);
    ExperimentData data = load_experiment_data(cfg);

    const std::filesystem::path out_root = resolve_output_dir(cfg.output_dir);
    std::filesystem::create_directories(out_root);

    RunReport report;
    report.output_dir = out_root.string();
    std::vector<NamedTrace> plot_traces;

    for (Strategy strategy : cfg.strategies) {
        for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
            const std::uint64_t seed = cfg.seeds[si];
            TrainConfig tc = cfg.train_for(strategy);
            tc.seed = seed;

            ModelConfig mc = cfg.model;
            mc.input_shape = data.target.train.feature_shape;
            if (data.source.train.size() > 0)
                mc.source_classes = data.source.train.num_classes;
            mc.target_classes = data.target.train.num_classes;

            TrainedModel tm = [&] {
                try {
                    return train(mc, tc, data.source, data.target);
                } catch (const NumericError& e) {
                    std::string msg = e.what();
                    const std::string prefix = "numeric failure: ";
                    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
                    throw NumericError("strategy " + strategy_name(strategy) + ", seed " +
                                       std::to_string(seed) + ", " + msg);
                }
            }();

            RunResult rr;
            rr.strategy = strategy;
            rr.seed = seed;
            const std::filesystem::path run_dir =
                out_root / (strategy_name(strategy) + "-seed" + std::to_string(seed));
            std::filesystem::create_directories(run_dir);
            rr.run_dir = run_dir.string();

            rr.trace_path = (run_dir / "trace.csv").string();
            write_trace_csv(tm.trace, rr.trace_path);

            rr.model_checkpoint_path = (run_dir / "model.ckpt").string();
            tm.model.save_checkpoint(rr.model_checkpoint_path);

            if (tm.has_policy) {
                rr.policy_checkpoint_path = (run_dir / "policy.ckpt").string();
                save_policy(tm.policy, rr.policy_checkpoint_path);
            }
            if (strategy == Strategy::L2tl) {
                Rng rank_rng(seed ^ 0x9e3779b97f4a7c15ULL);
                auto ranks = rank_source_classes(tm.policy, 10000, rank_rng);
                std::vector<std::string> names;
                for (std::size_t c = 0; c < data.source.train.num_classes; ++c)
                    names.push_back(data.source.train.class_name(c));
                rr.ranking_path = (run_dir / "ranking.csv").string();
                write_ranking_csv(ranks, names, rr.ranking_path);
            }

            const Tensor test_logits = exp_detail::eval_logits_chunked(tm.model, data.target.test);
            rr.final_test_metric =
                reward_from_logits(tc.reward_metric, test_logits, data.target.test.labels);
            for (const TraceRecord& r : tm.trace.records)
                if (r.has_eval) rr.best_val_metric = std::max(rr.best_val_metric, r.eval_metric);

            if (si == 0) plot_traces.push_back({strategy_name(strategy), tm.trace});
            report.runs.push_back(std::move(rr));
        }
    }

    report.summaries = summarize(cfg.strategies, report.runs);
    write_comparison_csv(report.summaries, (out_root / "comparison.csv").string());
    write_comparison_text(report.summaries, (out_root / "comparison.txt").string());
    emit_plots(plot_traces, (out_root / "reward.svg").string(), (out_root / "eval.svg").string());

    std::ofstream summary(out_root / "summary.txt");
    summary << "l2t experiment summary\n";
    summary << "generated: " << exp_detail::timestamp_now() << " UTC\n";
    summary << "config: " << config_path << "\n";
    summary << "dataset: "
            << (cfg.dataset_kind == DatasetKind::Synthetic ? "synthetic" : "idx") << ", source "
            << data.source.train.size() << " examples / " << data.source.train.num_classes
            << " classes, target " << data.target.train.size() << "+" << data.target.val.size()
            << "+" << data.target.test.size() << " examples / " << data.target.train.num_classes
            << " classes\n";
    summary << "seeds:";
    for (auto s : cfg.seeds) summary << " " << s;
    summary << "\n\nfinal test metric (" << metric_name(cfg.train.reward_metric) << ")\n";
    summary << render_comparison_text(report.summaries) << "\nruns\n";
    for (const RunResult& r : report.runs) {
        summary << "  " << strategy_name(r.strategy) << " seed " << r.seed << ": final test "
                << format_double(r.final_test_metric) << ", best val "
                << format_double(r.best_val_metric) << ", dir " << r.run_dir << "\n";
    }
    return report;
}

} // namespace l2t
