#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "l2t/error.hpp"
#include "l2t/tensor.hpp"

namespace l2t {

enum class MetricKind { Top1Accuracy, Auc, MeanAucOverLabels };

inline std::string metric_name(MetricKind k) {
    switch (k) {
        case MetricKind::Top1Accuracy: return "top1";
        case MetricKind::Auc: return "auc";
        case MetricKind::MeanAucOverLabels: return "mean-auc";
    }
    return "?";
}

// Fraction of rows whose argmax matches the label. Argmax ties break toward
// the lowest index.
inline double top1_accuracy(const Tensor& logits, const std::vector<std::size_t>& labels) {
    if (logits.ndim() != 2 || logits.dim(0) == 0)
        throw MetricError("top1_accuracy: empty or non-2d logits");
    if (labels.size() != logits.dim(0))
        throw MetricError("top1_accuracy: " + std::to_string(logits.dim(0)) + " rows vs " +
                          std::to_string(labels.size()) + " labels");
    const std::size_t N = logits.dim(0), C = logits.dim(1);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < N; ++i) {
        if (labels[i] >= C)
            throw MetricError("top1_accuracy: label " + std::to_string(labels[i]) +
                              " out of range");
        std::size_t best = 0;
        for (std::size_t j = 1; j < C; ++j)
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        if (best == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(N);
}

// Mann-Whitney AUC: P(score+ > score-) + 0.5 * P(score+ = score-), via sorted
// average ranks so ties are handled exactly.
inline double auc(const std::vector<double>& scores, const std::vector<int>& binary_labels) {
    if (scores.size() != binary_labels.size())
        throw MetricError("auc: " + std::to_string(scores.size()) + " scores vs " +
                          std::to_string(binary_labels.size()) + " labels");
    std::size_t pos = 0, neg = 0;
    for (int y : binary_labels) {
        if (y != 0 && y != 1) throw MetricError("auc: labels must be 0/1");
        (y == 1 ? pos : neg) += 1;
    }
    if (pos == 0 || neg == 0)
        throw MetricError("auc degenerate input: need at least one positive and one negative (" +
                          std::to_string(pos) + " pos, " + std::to_string(neg) + " neg)");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        // 1-based average rank of the tie group [i, j)
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (binary_labels[order[k]] == 1) pos_rank_sum += avg_rank;
        i = j;
    }
    const double p = static_cast<double>(pos);
    const double n = static_cast<double>(neg);
    return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

namespace detail {

// One-vs-rest AUC for class `c`. The raw logit column is the score; AUC only
// sees its ordering, so this matches scoring by the per-label sigmoid.
inline double class_auc(const Tensor& logits, const std::vector<std::size_t>& labels,
                        std::size_t c) {
    const std::size_t N = logits.dim(0);
    std::vector<double> scores(N);
    std::vector<int> binary(N);
    for (std::size_t i = 0; i < N; ++i) {
        scores[i] = logits.at(i, c);
        binary[i] = labels[i] == c ? 1 : 0;
    }
    return auc(scores, binary);
}

} // namespace detail

// Metric value in [0,1] computed on head logits; usable as an RL reward since
// nothing here needs to be differentiable.
inline double reward_from_logits(MetricKind kind, const Tensor& logits,
                                 const std::vector<std::size_t>& labels) {
    if (logits.ndim() != 2 || logits.dim(0) == 0)
        throw MetricError(metric_name(kind) + " reward: empty batch");
    switch (kind) {
        case MetricKind::Top1Accuracy:
            return top1_accuracy(logits, labels);
        case MetricKind::Auc: {
            if (logits.dim(1) != 2)
                throw MetricError("auc reward needs a binary head, got " +
                                  std::to_string(logits.dim(1)) + " classes");
            return detail::class_auc(logits, labels, 1);
        }
        case MetricKind::MeanAucOverLabels: {
            const std::size_t C = logits.dim(1);
            double acc = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                try {
                    acc += detail::class_auc(logits, labels, c);
                } catch (const MetricError& e) {
                    throw MetricError("mean-auc, label " + std::to_string(c) + ": " + e.what());
                }
            }
            return acc / static_cast<double>(C);
        }
    }
    throw MetricError("unknown metric kind");
}

} // namespace l2t
