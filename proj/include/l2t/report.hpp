#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "l2t/error.hpp"
#include "l2t/fmt.hpp"
#include "l2t/svg.hpp"
#include "l2t/trainer.hpp"

namespace l2t {

struct RunResult {
    Strategy strategy;
    std::uint64_t seed = 0;
    double final_test_metric = 0.0;
    double best_val_metric = 0.0;
    std::string run_dir;
    std::string trace_path;
    std::string model_checkpoint_path;
    std::string policy_checkpoint_path; // empty for strategies without a policy
    std::string ranking_path;           // l2tl only
};

struct StrategySummary {
    Strategy strategy;
    std::vector<double> per_seed; // final test metric, config seed order
    double mean = 0.0;
    double stddev = 0.0; // sample stddev; 0 for a single seed
};

struct RunReport {
    std::vector<RunResult> runs;
    std::vector<StrategySummary> summaries; // config strategy order
    std::string output_dir;
};

inline double sample_stddev(const std::vector<double>& xs, double mean) {
    if (xs.size() < 2) return 0.0;
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

inline std::vector<StrategySummary> summarize(const std::vector<Strategy>& order,
                                              const std::vector<RunResult>& runs) {
    std::vector<StrategySummary> out;
    for (Strategy s : order) {
        StrategySummary sum;
        sum.strategy = s;
        for (const RunResult& r : runs)
            if (r.strategy == s) sum.per_seed.push_back(r.final_test_metric);
        if (sum.per_seed.empty()) continue;
        for (double v : sum.per_seed) sum.mean += v;
        sum.mean /= static_cast<double>(sum.per_seed.size());
        sum.stddev = sample_stddev(sum.per_seed, sum.mean);
        out.push_back(std::move(sum));
    }
    return out;
}

// CSV: strategy,mean,stddev,seed values...
inline void write_comparison_csv(const std::vector<StrategySummary>& summaries,
                                 const std::string& path) {
    if (summaries.empty()) throw Error("comparison table: no runs");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write comparison '" + path + "'");
    std::size_t max_seeds = 0;
    for (const auto& s : summaries) max_seeds = std::max(max_seeds, s.per_seed.size());
    out << "strategy,mean,stddev";
    for (std::size_t i = 0; i < max_seeds; ++i) out << ",seed" << (i + 1);
    out << "\n";
    for (const auto& s : summaries) {
        out << strategy_name(s.strategy) << "," << format_double(s.mean) << ","
            << format_double(s.stddev);
        for (std::size_t i = 0; i < max_seeds; ++i)
            out << "," << (i < s.per_seed.size() ? format_double(s.per_seed[i]) : "");
        out << "\n";
    }
}

// Aligned, human-readable counterpart of the CSV.
inline std::string render_comparison_text(const std::vector<StrategySummary>& summaries) {
    if (summaries.empty()) throw Error("comparison table: no runs");
    auto num = [](double v) {
        char b[32];
        std::snprintf(b, sizeof(b), "%8.4f", v);
        return std::string(b);
    };
    std::size_t name_w = 8;
    for (const auto& s : summaries)
        name_w = std::max(name_w, strategy_name(s.strategy).size());
    std::string text;
    std::string header = "strategy";
    header.resize(name_w, ' ');
    text += header + "      mean    stddev  per-seed\n";
    for (const auto& s : summaries) {
        std::string name = strategy_name(s.strategy);
        name.resize(name_w, ' ');
        text += name + "  " + num(s.mean) + "  " + num(s.stddev) + " ";
        for (double v : s.per_seed) text += " " + num(v);
        text += "\n";
    }
    return text;
}

inline void write_comparison_text(const std::vector<StrategySummary>& summaries,
                                  const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write comparison '" + path + "'");
    out << render_comparison_text(summaries);
}

// Reward-vs-iteration and eval-vs-iteration charts, one series per trace.
struct NamedTrace {
    std::string label;
    TrainTrace trace;
};

inline SvgLinePlot reward_plot(const std::vector<NamedTrace>& traces) {
    SvgLinePlot plot("reward on the validation batch", "iteration", "reward");
    for (const auto& nt : traces) {
        PlotSeries s;
        s.label = nt.label;
        for (const TraceRecord& r : nt.trace.records)
            if (r.has_policy) {
                s.x.push_back(static_cast<double>(r.iteration));
                s.y.push_back(r.reward);
            }
        plot.add_series(std::move(s));
    }
    return plot;
}

inline SvgLinePlot eval_plot(const std::vector<NamedTrace>& traces) {
    SvgLinePlot plot("validation metric", "iteration", "metric");
    for (const auto& nt : traces) {
        PlotSeries s;
        s.label = nt.label;
        for (const TraceRecord& r : nt.trace.records)
            if (r.has_eval) {
                s.x.push_back(static_cast<double>(r.iteration));
                s.y.push_back(r.eval_metric);
            }
        plot.add_series(std::move(s));
    }
    return plot;
}

inline void emit_plots(const std::vector<NamedTrace>& traces, const std::string& reward_path,
                       const std::string& eval_path) {
    if (traces.empty()) throw Error("emit_plots: no traces");
    reward_plot(traces).write(reward_path);
    eval_plot(traces).write(eval_path);
}

} // namespace l2t
