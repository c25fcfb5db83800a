#pragma once

// Experiment configuration: a flat, typed key-value format with [sections].
// Unknown keys, type errors and missing files are reported with the line they
// came from, before any output is produced.

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "l2t/error.hpp"
#include "l2t/metrics.hpp"
#include "l2t/model.hpp"
#include "l2t/synthetic.hpp"
#include "l2t/trainer.hpp"

namespace l2t {

namespace cfg_detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Entry {
    std::string value;
    std::size_t line = 0;
    mutable bool used = false;
};

struct Ini {
    std::string path;
    std::map<std::string, std::map<std::string, Entry>> sections;

    const Entry* find(const std::string& section, const std::string& key) const {
        auto s = sections.find(section);
        if (s == sections.end()) return nullptr;
        auto k = s->second.find(key);
        if (k == s->second.end()) return nullptr;
        k->second.used = true;
        return &k->second;
    }

    [[noreturn]] void fail(const Entry& e, const std::string& what) const {
        throw ConfigError(path + ":" + std::to_string(e.line) + ": " + what);
    }

    std::string get_string(const std::string& sec, const std::string& key,
                           const std::string& fallback, bool* found = nullptr) const {
        const Entry* e = find(sec, key);
        if (found) *found = e != nullptr;
        return e ? e->value : fallback;
    }

    std::string require_string(const std::string& sec, const std::string& key) const {
        const Entry* e = find(sec, key);
        if (!e) throw ConfigError(path + ": missing required key '" + key + "' in [" + sec + "]");
        return e->value;
    }

    std::uint64_t get_u64(const std::string& sec, const std::string& key,
                          std::uint64_t fallback) const {
        const Entry* e = find(sec, key);
        if (!e) return fallback;
        try {
            std::size_t pos = 0;
            const std::uint64_t v = std::stoull(e->value, &pos);
            if (pos != e->value.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            fail(*e, "field '" + key + "' expects a non-negative integer, got '" + e->value + "'");
        }
    }

    double get_double(const std::string& sec, const std::string& key, double fallback) const {
        const Entry* e = find(sec, key);
        if (!e) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(e->value, &pos);
            if (pos != e->value.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            fail(*e, "field '" + key + "' expects a number, got '" + e->value + "'");
        }
    }

    bool get_bool(const std::string& sec, const std::string& key, bool fallback) const {
        const Entry* e = find(sec, key);
        if (!e) return fallback;
        if (e->value == "true" || e->value == "1") return true;
        if (e->value == "false" || e->value == "0") return false;
        fail(*e, "field '" + key + "' expects true/false, got '" + e->value + "'");
    }

    std::vector<std::string> get_list(const std::string& sec, const std::string& key) const {
        const Entry* e = find(sec, key);
        std::vector<std::string> out;
        if (!e) return out;
        std::string cur;
        for (char c : e->value + ",") {
            if (c == ',') {
                const std::string item = trim(cur);
                if (!item.empty()) out.push_back(item);
                cur.clear();
            } else {
                cur += c;
            }
        }
        return out;
    }

    // every key must have been consumed by a getter
    void check_all_used() const {
        for (const auto& [sec, keys] : sections)
            for (const auto& [key, entry] : keys)
                if (!entry.used)
                    throw ConfigError(path + ":" + std::to_string(entry.line) +
                                      ": unknown key '" + key + "' in [" + sec + "]");
    }
};

inline Ini parse_ini(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    Ini ini;
    ini.path = path;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        const auto hash = t.find('#');
        if (hash != std::string::npos) t = trim(t.substr(0, hash));
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError(path + ":" + std::to_string(lineno) + ": unterminated section");
            section = trim(t.substr(1, t.size() - 2));
            ini.sections[section];
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        if (section.empty())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": key outside any section");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key or value");
        auto [it, fresh] = ini.sections[section].emplace(key, Entry{value, lineno, false});
        if (!fresh)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                              "' (first at line " + std::to_string(it->second.line) + ")");
    }
    return ini;
}

inline bool file_exists(const std::string& path) {
    std::ifstream in(path);
    return static_cast<bool>(in);
}

} // namespace cfg_detail

enum class DatasetKind { Synthetic, Idx };

struct IdxDatasetConfig {
    std::string source_images, source_labels;
    std::string target_images, target_labels;
    std::string target_test_images, target_test_labels;
    std::size_t subsample_per_class = 60;
    std::size_t val_per_class = 20;
    std::uint64_t split_seed = 1;
};

struct ExperimentConfig {
    DatasetKind dataset_kind = DatasetKind::Synthetic;
    SyntheticSpec synthetic;
    IdxDatasetConfig idx;

    ModelConfig model; // input_shape filled from the dataset at load time
    TrainConfig train; // strategy/seed overwritten per run
    std::map<Strategy, TrainConfig> train_overrides;

    std::vector<Strategy> strategies;
    std::vector<std::uint64_t> seeds;
    std::string output_dir;

    // effective settings for one strategy: the base [train] block plus any
    // [train.<strategy>] overrides
    TrainConfig train_for(Strategy s) const {
        auto it = train_overrides.find(s);
        TrainConfig t = it != train_overrides.end() ? it->second : train;
        t.strategy = s;
        if (s == Strategy::Scratch) t.finetune_source_steps = 0;
        return t;
    }
};

inline ExperimentConfig parse_experiment_config(const std::string& path) {
    using namespace cfg_detail;
    Ini ini = parse_ini(path);
    ExperimentConfig cfg;

    // [dataset]
    const std::string kind = ini.get_string("dataset", "kind", "synthetic");
    if (kind == "synthetic") {
        cfg.dataset_kind = DatasetKind::Synthetic;
        SyntheticSpec& s = cfg.synthetic;
        s.source_classes = ini.get_u64("dataset", "source_classes", s.source_classes);
        s.target_classes = ini.get_u64("dataset", "target_classes", s.target_classes);
        s.relevant_source_classes =
            ini.get_u64("dataset", "relevant_source_classes", s.relevant_source_classes);
        s.feature_dim = ini.get_u64("dataset", "feature_dim", s.feature_dim);
        s.source_train_per_class =
            ini.get_u64("dataset", "source_train_per_class", s.source_train_per_class);
        s.source_val_per_class =
            ini.get_u64("dataset", "source_val_per_class", s.source_val_per_class);
        s.source_test_per_class =
            ini.get_u64("dataset", "source_test_per_class", s.source_test_per_class);
        s.target_train_per_class =
            ini.get_u64("dataset", "target_train_per_class", s.target_train_per_class);
        s.target_val_per_class =
            ini.get_u64("dataset", "target_val_per_class", s.target_val_per_class);
        s.target_test_per_class =
            ini.get_u64("dataset", "target_test_per_class", s.target_test_per_class);
        s.noise = ini.get_double("dataset", "noise", s.noise);
        s.seed = ini.get_u64("dataset", "data_seed", s.seed);
        s.validate();
    } else if (kind == "idx") {
        cfg.dataset_kind = DatasetKind::Idx;
        IdxDatasetConfig& d = cfg.idx;
        d.source_images = ini.require_string("dataset", "source_images");
        d.source_labels = ini.require_string("dataset", "source_labels");
        d.target_images = ini.require_string("dataset", "target_images");
        d.target_labels = ini.require_string("dataset", "target_labels");
        d.target_test_images = ini.require_string("dataset", "target_test_images");
        d.target_test_labels = ini.require_string("dataset", "target_test_labels");
        d.subsample_per_class =
            ini.get_u64("dataset", "subsample_per_class", d.subsample_per_class);
        d.val_per_class = ini.get_u64("dataset", "val_per_class", d.val_per_class);
        d.split_seed = ini.get_u64("dataset", "split_seed", d.split_seed);
        if (d.subsample_per_class == 0 || d.val_per_class == 0)
            throw ConfigError(path + ": subsample_per_class and val_per_class must be >= 1");
        for (const std::string& p :
             {d.source_images, d.source_labels, d.target_images, d.target_labels,
              d.target_test_images, d.target_test_labels})
            if (!file_exists(p)) throw ConfigError(path + ": dataset file not found: " + p);
    } else {
        throw ConfigError(path + ": dataset kind must be 'synthetic' or 'idx', got '" + kind +
                          "'");
    }

    // [model]
    const std::string enc = ini.get_string("model", "encoder", "mlp");
    if (enc == "mlp")
        cfg.model.encoder = EncoderKind::Mlp;
    else if (enc == "lenet")
        cfg.model.encoder = EncoderKind::LeNet;
    else
        throw ConfigError(path + ": encoder must be 'mlp' or 'lenet', got '" + enc + "'");
    auto hidden = ini.get_list("model", "hidden");
    if (!hidden.empty()) {
        cfg.model.hidden.clear();
        for (const auto& h : hidden) {
            try {
                cfg.model.hidden.push_back(std::stoull(h));
            } catch (...) {
                throw ConfigError(path + ": bad hidden width '" + h + "'");
            }
        }
    }
    cfg.model.weight_decay = ini.get_double("model", "weight_decay", cfg.model.weight_decay);
    cfg.model.init_seed = ini.get_u64("model", "init_seed", cfg.model.init_seed);

    // [train] and per-strategy [train.<name>] overrides
    auto parse_train = [&ini, &path](const std::string& sec, const TrainConfig& base) {
        TrainConfig t = base;
        t.iterations = ini.get_u64(sec, "iterations", t.iterations);
        t.batch_source = ini.get_u64(sec, "batch_source", t.batch_source);
        t.batch_target = ini.get_u64(sec, "batch_target", t.batch_target);
        t.batch_reward = ini.get_u64(sec, "batch_reward", t.batch_reward);
        t.batch_multiplier = ini.get_u64(sec, "batch_multiplier", t.batch_multiplier);
        t.finetune_source_steps =
            ini.get_u64(sec, "finetune_source_steps", t.finetune_source_steps);
        t.model_lr = ini.get_double(sec, "model_lr", t.model_lr);
        t.warmup_steps = ini.get_u64(sec, "warmup_steps", t.warmup_steps);
        const std::string sched =
            ini.get_string(sec, "schedule",
                           base.schedule == ScheduleKind::CosineWarmup ? "cosine" : "constant");
        if (sched == "cosine")
            t.schedule = ScheduleKind::CosineWarmup;
        else if (sched == "constant")
            t.schedule = ScheduleKind::Constant;
        else
            throw ConfigError(path + ": schedule must be 'cosine' or 'constant', got '" + sched +
                              "'");
        t.policy_lr = ini.get_double(sec, "policy_lr", t.policy_lr);
        const std::string psched = ini.get_string(
            sec, "policy_schedule",
            base.policy_schedule == ScheduleKind::CosineWarmup ? "cosine" : "constant");
        if (psched == "cosine")
            t.policy_schedule = ScheduleKind::CosineWarmup;
        else if (psched == "constant")
            t.policy_schedule = ScheduleKind::Constant;
        else
            throw ConfigError(path + ": policy_schedule must be 'cosine' or 'constant', got '" +
                              psched + "'");
        t.policy_warmup_steps = ini.get_u64(sec, "policy_warmup_steps", t.policy_warmup_steps);
        t.weight_bins = ini.get_u64(sec, "weight_bins", t.weight_bins);
        t.alpha_bins = ini.get_u64(sec, "alpha_bins", t.alpha_bins);
        t.alpha_range = ini.get_double(sec, "alpha_range", t.alpha_range);
        t.baseline_decay = ini.get_double(sec, "baseline_decay", t.baseline_decay);
        const std::string metric =
            ini.get_string(sec, "reward_metric", metric_name(base.reward_metric));
        if (metric == "top1")
            t.reward_metric = MetricKind::Top1Accuracy;
        else if (metric == "auc")
            t.reward_metric = MetricKind::Auc;
        else if (metric == "mean-auc")
            t.reward_metric = MetricKind::MeanAucOverLabels;
        else
            throw ConfigError(path + ": reward_metric must be top1, auc or mean-auc, got '" +
                              metric + "'");
        t.eval_every = ini.get_u64(sec, "eval_every", t.eval_every);
        t.replay_final_training =
            ini.get_bool(sec, "replay_final_training", t.replay_final_training);
        return t;
    };
    cfg.train = parse_train("train", cfg.train);
    for (Strategy s : {Strategy::L2tl, Strategy::Finetune, Strategy::Scratch, Strategy::Uniform,
                       Strategy::RandomSearch}) {
        const std::string sec = "train." + strategy_name(s);
        if (ini.sections.count(sec)) cfg.train_overrides.emplace(s, parse_train(sec, cfg.train));
    }

    // [experiment]
    for (const std::string& s : ini.get_list("experiment", "strategies"))
        cfg.strategies.push_back(parse_strategy(s));
    for (const std::string& s : ini.get_list("experiment", "seeds")) {
        try {
            cfg.seeds.push_back(std::stoull(s));
        } catch (...) {
            throw ConfigError(path + ": bad seed '" + s + "'");
        }
    }
    cfg.output_dir = ini.get_string("experiment", "output_dir", "");

    ini.check_all_used();

    if (cfg.strategies.empty())
        throw ConfigError(path + ": [experiment] needs at least one strategy");
    if (cfg.seeds.empty()) throw ConfigError(path + ": [experiment] needs at least one seed");
    if (cfg.output_dir.empty()) throw ConfigError(path + ": [experiment] needs output_dir");
    {
        std::set<Strategy> seen;
        for (Strategy s : cfg.strategies)
            if (!seen.insert(s).second)
                throw ConfigError(path + ": duplicate strategy '" + strategy_name(s) + "'");
    }

    for (Strategy s : cfg.strategies) cfg.train_for(s).validate();
    return cfg;
}

} // namespace l2t
