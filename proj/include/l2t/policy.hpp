#pragma once

// RL controller over source-class importance weights and the source-loss
// scale: a contextless factorized categorical distribution, one softmax row
// per source class plus one softmax over the alpha grid, trained with
// REINFORCE against an advantage (reward minus moving-average baseline).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "l2t/error.hpp"
#include "l2t/graph.hpp"
#include "l2t/optim.hpp"
#include "l2t/rng.hpp"
#include "l2t/tensor.hpp"

namespace l2t {

struct PolicyParams {
    Tensor class_logits; // (source classes, weight bins)
    Tensor alpha_logits; // (alpha bins)
    double beta = 0.5;   // alpha range bound

    std::size_t num_classes() const { return class_logits.dim(0); }
    std::size_t weight_bins() const { return class_logits.dim(1); }
    std::size_t alpha_bins() const { return alpha_logits.dim(0); }
};

// All-zero logits: every factor starts exactly uniform.
inline PolicyParams init_policy(std::size_t source_classes, std::size_t weight_bins,
                                std::size_t alpha_bins, double beta) {
    if (source_classes == 0 || weight_bins < 2 || alpha_bins < 1)
        throw Error("init_policy: need classes >= 1, weight bins >= 2, alpha bins >= 1");
    if (beta <= 0) throw Error("init_policy: beta must be positive");
    PolicyParams p;
    p.class_logits = Tensor({source_classes, weight_bins});
    p.alpha_logits = Tensor({alpha_bins});
    p.beta = beta;
    return p;
}

// Bin k of n maps to the weight k/(n-1), so the grid spans [0, 1].
inline double weight_of(std::size_t k, std::size_t n) {
    if (n < 2) throw Error("weight_of: need at least 2 bins");
    if (k >= n)
        throw Error("weight_of: bin " + std::to_string(k) + " out of range for " +
                    std::to_string(n));
    return static_cast<double>(k) / static_cast<double>(n - 1);
}

// Bin k' of n' maps to beta*k'/(n'-1), spanning [0, beta]. A single-bin grid
// degenerates to alpha = beta.
inline double alpha_of(std::size_t k, std::size_t n, double beta) {
    if (n == 0) throw Error("alpha_of: need at least 1 bin");
    if (k >= n)
        throw Error("alpha_of: bin " + std::to_string(k) + " out of range for " +
                    std::to_string(n));
    if (n == 1) return beta;
    return beta * static_cast<double>(k) / static_cast<double>(n - 1);
}

struct Action {
    std::vector<std::size_t> weight_bins; // empty when only alpha was sampled
    std::size_t alpha_bin = 0;
    double log_prob = 0.0; // sum of the sampled factors' log-probabilities
};

namespace policy_detail {

inline std::vector<double> softmax(const double* logits, std::size_t n) {
    double mx = logits[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    std::vector<double> p(n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += p[i] = std::exp(logits[i] - mx);
    for (auto& v : p) v /= s;
    return p;
}

inline std::size_t draw(const std::vector<double>& probs, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

} // namespace policy_detail

// One factor per source class plus the alpha factor, drawn independently.
inline Action sample_action(const PolicyParams& p, Rng& rng) {
    Action a;
    const std::size_t n = p.weight_bins();
    for (std::size_t c = 0; c < p.num_classes(); ++c) {
        auto probs = policy_detail::softmax(p.class_logits.data() + c * n, n);
        const std::size_t k = policy_detail::draw(probs, rng);
        a.weight_bins.push_back(k);
        a.log_prob += std::log(probs[k]);
    }
    auto aprobs = policy_detail::softmax(p.alpha_logits.data(), p.alpha_bins());
    a.alpha_bin = policy_detail::draw(aprobs, rng);
    a.log_prob += std::log(aprobs[a.alpha_bin]);
    return a;
}

// Alpha factor alone; used by the uniform-weights and random-search
// strategies, whose class weights do not come from the policy.
inline Action sample_alpha_only(const PolicyParams& p, Rng& rng) {
    Action a;
    auto aprobs = policy_detail::softmax(p.alpha_logits.data(), p.alpha_bins());
    a.alpha_bin = policy_detail::draw(aprobs, rng);
    a.log_prob = std::log(aprobs[a.alpha_bin]);
    return a;
}

struct BaselineState {
    double value = 0.0;  // b0 = 0
    double decay = 0.05; // gamma
    bool initialized = false;
};

// b' = (1 - gamma) * b + gamma * R
inline void update_baseline(BaselineState& state, double reward) {
    if (!std::isfinite(reward)) throw NumericError("baseline update: non-finite reward");
    state.value = (1.0 - state.decay) * state.value + state.decay * reward;
    state.initialized = true;
}

struct PolicyGradient {
    bool with_classes = false;
    Tensor class_grad; // gradient of mean(-A * log pi) w.r.t. class logits
    Tensor alpha_grad; // same w.r.t. alpha logits
};

// Gradient of the descent objective mean_i(-(R_i - b) * log pi(action_i)).
// Negating it gives the REINFORCE ascent estimator. Log-probs are rebuilt
// from the stored bin indices at the current parameters (the policy is frozen
// between sampling and update, so these match the sampling distribution).
// Class logits participate only when the actions carry weight bins.
inline PolicyGradient policy_gradient(const PolicyParams& p, const std::vector<Action>& actions,
                                      const std::vector<double>& rewards,
                                      const BaselineState& baseline) {
    if (actions.empty()) throw Error("policy update: empty action batch");
    if (actions.size() != rewards.size())
        throw Error("policy update: " + std::to_string(actions.size()) + " actions vs " +
                    std::to_string(rewards.size()) + " rewards");
    const bool with_classes = !actions[0].weight_bins.empty();
    for (const Action& a : actions)
        if (a.weight_bins.empty() == with_classes)
            throw Error("policy update: mixed action kinds in one batch");

    Graph g;
    Var class_v = g.input(p.class_logits, with_classes);
    Var alpha_v = g.reshape(g.input(p.alpha_logits, true), {1, p.alpha_bins()});

    Var loss = g.constant(Tensor::scalar(0.0));
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const double advantage = rewards[i] - baseline.value;
        // softmax_xent yields -log softmax picks, one per factor row
        Var neg_logp = g.sum(g.softmax_xent(alpha_v, {actions[i].alpha_bin}));
        if (with_classes)
            neg_logp = g.add(neg_logp, g.sum(g.softmax_xent(class_v, actions[i].weight_bins)));
        loss = g.add(loss, g.scale(neg_logp, advantage));
    }
    loss = g.scale(loss, 1.0 / static_cast<double>(actions.size()));
    g.backward(loss);

    PolicyGradient out;
    out.with_classes = with_classes;
    if (with_classes) out.class_grad = g.grad(class_v);
    // reshape node shares the flat layout, so its gradient applies directly
    out.alpha_grad = Tensor(p.alpha_logits.shape(), g.grad(alpha_v).values());
    return out;
}

// One REINFORCE ascent step, applied with Adam.
inline void reinforce_update(PolicyParams& p, const std::vector<Action>& actions,
                             const std::vector<double>& rewards, const BaselineState& baseline,
                             Adam& optimizer, double lr) {
    const PolicyGradient pg = policy_gradient(p, actions, rewards, baseline);
    if (pg.with_classes) {
        optimizer.step({&p.class_logits, &p.alpha_logits}, {&pg.class_grad, &pg.alpha_grad}, lr);
    } else {
        optimizer.step({&p.alpha_logits}, {&pg.alpha_grad}, lr);
    }
}

// Exact n' * n^c, carried both as u64 (when it fits) and as a decimal string.
struct ActionSpaceSize {
    bool fits_u64 = true;
    std::uint64_t value = 0;
    std::string decimal;
};

inline ActionSpaceSize action_space_size(std::size_t source_classes, std::size_t weight_bins,
                                         std::size_t alpha_bins) {
    if (weight_bins == 0 || alpha_bins == 0)
        throw Error("action_space_size: bin counts must be positive");
    // little-endian decimal digits
    std::vector<int> digits{1};
    auto mul_small = [&digits](std::uint64_t m) {
        std::uint64_t carry = 0;
        for (auto& d : digits) {
            const std::uint64_t v = static_cast<std::uint64_t>(d) * m + carry;
            d = static_cast<int>(v % 10);
            carry = v / 10;
        }
        while (carry) {
            digits.push_back(static_cast<int>(carry % 10));
            carry /= 10;
        }
    };
    ActionSpaceSize out;
    out.value = alpha_bins;
    mul_small(alpha_bins);
    for (std::size_t c = 0; c < source_classes; ++c) {
        mul_small(weight_bins);
        if (out.fits_u64) {
            std::uint64_t next;
            if (__builtin_mul_overflow(out.value, static_cast<std::uint64_t>(weight_bins), &next))
                out.fits_u64 = false;
            else
                out.value = next;
        }
    }
    for (auto it = digits.rbegin(); it != digits.rend(); ++it)
        out.decimal += static_cast<char>('0' + *it);
    return out;
}

struct ClassRank {
    std::size_t class_id;
    double mean_weight;
};

// Monte Carlo class ranking: mean sampled weight per class over `samples`
// policy draws, descending; ties break toward the lower class id.
inline std::vector<ClassRank> rank_source_classes(const PolicyParams& p, std::size_t samples,
                                                  Rng& rng) {
    if (samples == 0) throw Error("rank_source_classes: need at least one sample");
    std::vector<double> mean(p.num_classes(), 0.0);
    for (std::size_t s = 0; s < samples; ++s) {
        const Action a = sample_action(p, rng);
        for (std::size_t c = 0; c < p.num_classes(); ++c)
            mean[c] += weight_of(a.weight_bins[c], p.weight_bins());
    }
    std::vector<ClassRank> out;
    for (std::size_t c = 0; c < p.num_classes(); ++c)
        out.push_back({c, mean[c] / static_cast<double>(samples)});
    std::stable_sort(out.begin(), out.end(), [](const ClassRank& a, const ClassRank& b) {
        return a.mean_weight > b.mean_weight;
    });
    return out;
}

inline void save_policy(const PolicyParams& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write policy checkpoint '" + path + "'");
    char buf[40];
    out << "l2t-policy v1\n";
    out << "classes " << p.num_classes() << "\n";
    out << "weight_bins " << p.weight_bins() << "\n";
    out << "alpha_bins " << p.alpha_bins() << "\n";
    std::snprintf(buf, sizeof(buf), "%.17g", p.beta);
    out << "beta " << buf << "\n";
    auto dump = [&out, &buf](const Tensor& t) {
        for (std::size_t i = 0; i < t.numel(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", t[i]);
            out << buf << (i + 1 == t.numel() ? "" : " ");
        }
        out << "\n";
    };
    out << "class_logits\n";
    dump(p.class_logits);
    out << "alpha_logits\n";
    dump(p.alpha_logits);
}

inline PolicyParams load_policy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read policy checkpoint '" + path + "'");
    std::string line, key;
    if (!std::getline(in, line) || line != "l2t-policy v1")
        throw DataError("'" + path + "': not a l2t-policy v1 checkpoint");
    std::size_t classes = 0, n = 0, na = 0;
    double beta = 0.0;
    in >> key >> classes;
    if (key != "classes") throw DataError("'" + path + "': expected classes");
    in >> key >> n;
    if (key != "weight_bins") throw DataError("'" + path + "': expected weight_bins");
    in >> key >> na;
    if (key != "alpha_bins") throw DataError("'" + path + "': expected alpha_bins");
    in >> key >> beta;
    if (key != "beta") throw DataError("'" + path + "': expected beta");
    PolicyParams p = init_policy(classes, n, na, beta);
    in >> key;
    if (key != "class_logits") throw DataError("'" + path + "': expected class_logits");
    for (std::size_t i = 0; i < p.class_logits.numel(); ++i) in >> p.class_logits[i];
    in >> key;
    if (key != "alpha_logits") throw DataError("'" + path + "': expected alpha_logits");
    for (std::size_t i = 0; i < p.alpha_logits.numel(); ++i) in >> p.alpha_logits[i];
    if (!in) throw DataError("'" + path + "': truncated logits");
    return p;
}

// CSV: class_id,class_name,mean_weight,rank (rank is 1-based).
inline void write_ranking_csv(const std::vector<ClassRank>& ranks,
                              const std::vector<std::string>& class_names,
                              const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write ranking '" + path + "'");
    out << "class_id,class_name,mean_weight,rank\n";
    char buf[40];
    for (std::size_t r = 0; r < ranks.size(); ++r) {
        const auto& cr = ranks[r];
        const std::string name = cr.class_id < class_names.size()
                                     ? class_names[cr.class_id]
                                     : "class_" + std::to_string(cr.class_id);
        std::snprintf(buf, sizeof(buf), "%.17g", cr.mean_weight);
        out << cr.class_id << "," << name << "," << buf << "," << (r + 1) << "\n";
    }
}

} // namespace l2t
