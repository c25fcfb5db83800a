// Experiment CLI: run config-driven training sweeps, rank source classes from
// a policy checkpoint, re-plot trace CSVs, or just validate a config.
//
// Exit codes: 0 success, 2 config/input error, 3 numeric failure during
// training, 1 anything else.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "l2t/experiment.hpp"
#include "l2t/policy.hpp"
#include "l2t/report.hpp"

namespace {

int cmd_run(const std::string& config_path) {
    l2t::RunReport report = l2t::run_experiment(config_path);
    std::cout << l2t::render_comparison_text(report.summaries);
    std::cout << "outputs in " << report.output_dir << "\n";
    return 0;
}

int cmd_validate(const std::string& config_path) {
    l2t::ExperimentConfig cfg = l2t::parse_experiment_config(config_path);
    std::cout << "ok: " << cfg.strategies.size() << " strategies x " << cfg.seeds.size()
              << " seeds, " << cfg.train.iterations << " iterations, output "
              << l2t::resolve_output_dir(cfg.output_dir).string() << "\n";
    return 0;
}

int cmd_rank(const std::string& checkpoint, std::size_t samples, std::uint64_t seed,
             const std::string& out_path) {
    l2t::PolicyParams policy = l2t::load_policy(checkpoint);
    l2t::Rng rng(seed);
    auto ranks = l2t::rank_source_classes(policy, samples, rng);
    std::vector<std::string> names;
    for (std::size_t c = 0; c < policy.num_classes(); ++c)
        names.push_back("class_" + std::to_string(c));
    l2t::write_ranking_csv(ranks, names, out_path);
    std::printf("%-8s %-12s %s\n", "rank", "class", "mean weight");
    for (std::size_t r = 0; r < ranks.size(); ++r)
        std::printf("%-8zu %-12zu %.4f\n", r + 1, ranks[r].class_id, ranks[r].mean_weight);
    std::cout << "ranking written to " << out_path << "\n";
    return 0;
}

int cmd_plot(const std::vector<std::string>& trace_paths, const std::string& out_dir) {
    std::vector<l2t::NamedTrace> traces;
    for (const std::string& p : trace_paths)
        traces.push_back({std::filesystem::path(p).parent_path().filename().string().empty()
                              ? std::filesystem::path(p).stem().string()
                              : std::filesystem::path(p).parent_path().filename().string(),
                          l2t::read_trace_csv(p)});
    std::filesystem::create_directories(out_dir);
    const std::string reward = (std::filesystem::path(out_dir) / "reward.svg").string();
    const std::string eval = (std::filesystem::path(out_dir) / "eval.svg").string();
    l2t::emit_plots(traces, reward, eval);
    std::cout << "wrote " << reward << " and " << eval << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive transfer-learning experiment runner"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "run every (strategy, seed) pair of a config");
    run->add_option("config", config_path, "experiment config file")->required();

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "parse and validate a config");
    validate->add_option("config", validate_path, "experiment config file")->required();

    std::string rank_ckpt, rank_out = "ranking.csv";
    std::size_t rank_samples = 10000;
    std::uint64_t rank_seed = 1;
    auto* rank = app.add_subcommand("rank", "rank source classes by mean sampled weight");
    rank->add_option("checkpoint", rank_ckpt, "policy checkpoint")->required();
    rank->add_option("--samples", rank_samples, "number of sampled actions");
    rank->add_option("--seed", rank_seed, "sampling seed");
    rank->add_option("--out", rank_out, "output CSV path");

    std::vector<std::string> plot_paths;
    std::string plot_out = ".";
    auto* plot = app.add_subcommand("plot", "render reward/eval SVG charts from trace CSVs");
    plot->add_option("traces", plot_paths, "trace.csv files")->required();
    plot->add_option("--out-dir", plot_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(config_path);
        if (*validate) return cmd_validate(validate_path);
        if (*rank) return cmd_rank(rank_ckpt, rank_samples, rank_seed, rank_out);
        if (*plot) return cmd_plot(plot_paths, plot_out);
    } catch (const l2t::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const l2t::DataError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const l2t::NumericError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 1;
}
