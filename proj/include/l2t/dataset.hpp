#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "l2t/error.hpp"
#include "l2t/rng.hpp"
#include "l2t/tensor.hpp"

namespace l2t {

// Immutable after construction; safe to read from concurrent runs.
struct LabeledDataset {
    std::string name;
    std::size_t num_classes = 0;
    Shape feature_shape;
    std::vector<Tensor> features;
    std::vector<std::size_t> labels;

    std::size_t size() const { return features.size(); }

    std::string class_name(std::size_t c) const { return "class_" + std::to_string(c); }

    void validate() const {
        if (features.empty()) throw DataError("dataset '" + name + "' is empty");
        if (features.size() != labels.size())
            throw DataError("dataset '" + name + "': " + std::to_string(features.size()) +
                            " features vs " + std::to_string(labels.size()) + " labels");
        for (std::size_t i = 0; i < features.size(); ++i) {
            if (features[i].shape() != feature_shape)
                throw DataError("dataset '" + name + "': example " + std::to_string(i) +
                                " has shape " + shape_str(features[i].shape()) + ", expected " +
                                shape_str(feature_shape));
            if (labels[i] >= num_classes)
                throw DataError("dataset '" + name + "': label " + std::to_string(labels[i]) +
                                " out of range at example " + std::to_string(i));
        }
    }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(num_classes, 0);
        for (std::size_t l : labels) ++counts[l];
        return counts;
    }
};

struct SplitSet {
    LabeledDataset train, val, test;
};

struct Batch {
    Tensor features; // (B, feature_shape...)
    std::vector<std::size_t> labels;

    std::size_t size() const { return labels.size(); }
};

inline Batch make_batch(const LabeledDataset& ds, const std::vector<std::size_t>& indices) {
    Shape shape{indices.size()};
    shape.insert(shape.end(), ds.feature_shape.begin(), ds.feature_shape.end());
    Batch b{Tensor(std::move(shape)), {}};
    const std::size_t stride = shape_numel(ds.feature_shape);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const Tensor& src = ds.features[indices[i]];
        std::copy(src.values().begin(), src.values().end(), b.features.data() + i * stride);
        b.labels.push_back(ds.labels[indices[i]]);
    }
    return b;
}

// I.i.d. uniform with replacement.
inline std::vector<std::size_t> sample_indices(const LabeledDataset& ds, std::size_t size,
                                               Rng& rng) {
    if (size == 0) throw DataError("sample_batch: size must be >= 1");
    std::vector<std::size_t> idx(size);
    for (auto& i : idx) i = rng.index(ds.size());
    return idx;
}

inline Batch sample_batch(const LabeledDataset& ds, std::size_t size, Rng& rng) {
    return make_batch(ds, sample_indices(ds, size, rng));
}

inline Batch full_batch(const LabeledDataset& ds) {
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    return make_batch(ds, idx);
}

namespace detail {

inline std::vector<std::vector<std::size_t>> indices_by_class(const LabeledDataset& ds) {
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
    return by_class;
}

inline LabeledDataset take(const LabeledDataset& ds, std::vector<std::size_t> indices,
                           const std::string& suffix) {
    std::sort(indices.begin(), indices.end());
    LabeledDataset out;
    out.name = ds.name + suffix;
    out.num_classes = ds.num_classes;
    out.feature_shape = ds.feature_shape;
    for (std::size_t i : indices) {
        out.features.push_back(ds.features[i]);
        out.labels.push_back(ds.labels[i]);
    }
    return out;
}

inline void shuffle(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

} // namespace detail

// Stratified split: per class, cumulative-rounded fraction boundaries keep
// per-class proportions within one example of the request.
inline SplitSet split(const LabeledDataset& ds, double train_frac, double val_frac,
                      double test_frac, std::uint64_t seed) {
    if (train_frac < 0 || val_frac < 0 || test_frac < 0 ||
        train_frac + val_frac + test_frac > 1.0 + 1e-12)
        throw DataError("split: fractions must be non-negative and sum to at most 1");
    std::size_t active = (train_frac > 0) + (val_frac > 0) + (test_frac > 0);
    if (active == 0) throw DataError("split: all fractions are zero");

    Rng rng(seed);
    auto by_class = detail::indices_by_class(ds);
    std::vector<std::size_t> train_idx, val_idx, test_idx;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& pool = by_class[c];
        if (pool.size() < active)
            throw DataError("split: class " + std::to_string(c) + " has " +
                            std::to_string(pool.size()) + " examples for " +
                            std::to_string(active) + " splits");
        detail::shuffle(pool, rng);
        const double n = static_cast<double>(pool.size());
        const std::size_t b1 = static_cast<std::size_t>(std::llround(train_frac * n));
        const std::size_t b2 = static_cast<std::size_t>(std::llround((train_frac + val_frac) * n));
        const std::size_t b3 =
            static_cast<std::size_t>(std::llround((train_frac + val_frac + test_frac) * n));
        for (std::size_t i = 0; i < b1; ++i) train_idx.push_back(pool[i]);
        for (std::size_t i = b1; i < b2; ++i) val_idx.push_back(pool[i]);
        for (std::size_t i = b2; i < b3 && i < pool.size(); ++i) test_idx.push_back(pool[i]);
    }
    return SplitSet{detail::take(ds, std::move(train_idx), "/train"),
                    detail::take(ds, std::move(val_idx), "/val"),
                    detail::take(ds, std::move(test_idx), "/test")};
}

// Exactly k examples per class, chosen without replacement.
inline LabeledDataset subsample_per_class(const LabeledDataset& ds, std::size_t k,
                                          std::uint64_t seed) {
    Rng rng(seed);
    auto by_class = detail::indices_by_class(ds);
    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& pool = by_class[c];
        if (pool.size() < k)
            throw DataError("subsample_per_class: class " + std::to_string(c) + " has " +
                            std::to_string(pool.size()) + " examples, need " + std::to_string(k));
        detail::shuffle(pool, rng);
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + k);
    }
    return detail::take(ds, std::move(chosen), "/sub" + std::to_string(k));
}

} // namespace l2t
