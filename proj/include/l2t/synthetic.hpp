#pragma once

// Synthetic source/target pair with controllable class relevance: relevant
// source classes share generative feature directions with target classes,
// irrelevant ones are isotropic noise whose labels carry no information.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "l2t/dataset.hpp"
#include "l2t/error.hpp"
#include "l2t/rng.hpp"

namespace l2t {

struct SyntheticSpec {
    std::size_t source_classes = 10;
    std::size_t target_classes = 5;
    std::size_t relevant_source_classes = 5;
    std::size_t feature_dim = 32;

    std::size_t source_train_per_class = 200;
    std::size_t source_val_per_class = 40;
    std::size_t source_test_per_class = 40;
    std::size_t target_train_per_class = 16;
    std::size_t target_val_per_class = 60;
    std::size_t target_test_per_class = 200;

    double noise = 0.75; // within-class stddev per dimension
    std::uint64_t seed = 1;

    void validate() const {
        if (relevant_source_classes > source_classes)
            throw DataError("synthetic spec: relevant classes exceed source classes");
        if (source_classes == 0 || target_classes == 0 || feature_dim == 0)
            throw DataError("synthetic spec: counts must be positive");
        if (source_train_per_class == 0 || source_val_per_class == 0 ||
            source_test_per_class == 0 || target_train_per_class == 0 ||
            target_val_per_class == 0 || target_test_per_class == 0)
            throw DataError("synthetic spec: per-class split sizes must be positive");
        if (noise <= 0) throw DataError("synthetic spec: noise must be positive");
    }
};

struct SyntheticPair {
    SplitSet source, target;
    std::vector<bool> relevance_mask;            // length source_classes
    std::vector<std::size_t> source_target_map;  // target class per source class;
                                                 // == target_classes when irrelevant
};

namespace synth_detail {

inline Tensor unit_vector(std::size_t dim, Rng& rng) {
    Tensor v = Tensor::normal({dim}, 0.0, 1.0, rng);
    double norm = 0.0;
    for (double x : v.values()) norm += x * x;
    norm = std::sqrt(norm);
    for (auto& x : v.values()) x /= norm;
    return v;
}

inline LabeledDataset gen_split(const std::string& name, std::size_t classes,
                                std::size_t per_class, std::size_t dim,
                                const std::vector<Tensor>& prototypes,
                                const std::vector<std::size_t>& proto_of_class, double noise,
                                double iso_scale, Rng& rng) {
    LabeledDataset ds;
    ds.name = name;
    ds.num_classes = classes;
    ds.feature_shape = {dim};
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t e = 0; e < per_class; ++e) {
            Tensor x({dim});
            if (proto_of_class[c] < prototypes.size()) {
                const Tensor& mu = prototypes[proto_of_class[c]];
                for (std::size_t i = 0; i < dim; ++i) x[i] = mu[i] + noise * rng.normal();
            } else {
                for (std::size_t i = 0; i < dim; ++i) x[i] = iso_scale * rng.normal();
            }
            ds.features.push_back(std::move(x));
            ds.labels.push_back(c);
        }
    return ds;
}

} // namespace synth_detail

// Pure function of the spec: identical specs give bit-identical datasets.
inline SyntheticPair make_synthetic_transfer_pair(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    std::vector<Tensor> prototypes;
    for (std::size_t t = 0; t < spec.target_classes; ++t)
        prototypes.push_back(synth_detail::unit_vector(spec.feature_dim, rng));

    // scatter the relevant classes across class ids
    std::vector<std::size_t> order(spec.source_classes);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    detail::shuffle(order, rng);

    SyntheticPair pair;
    pair.relevance_mask.assign(spec.source_classes, false);
    pair.source_target_map.assign(spec.source_classes, spec.target_classes);
    for (std::size_t r = 0; r < spec.relevant_source_classes; ++r) {
        pair.relevance_mask[order[r]] = true;
        pair.source_target_map[order[r]] = r % spec.target_classes;
    }

    // irrelevant examples norm-matched to prototype + noise examples, so they
    // occupy the same input region the targets live in
    const double iso_scale = std::sqrt(1.0 / static_cast<double>(spec.feature_dim) +
                                       spec.noise * spec.noise);

    std::vector<std::size_t> target_map(spec.target_classes);
    for (std::size_t t = 0; t < spec.target_classes; ++t) target_map[t] = t;

    auto gen_source = [&](const char* tag, std::size_t per_class) {
        return synth_detail::gen_split(std::string("synthetic-source/") + tag,
                                       spec.source_classes, per_class, spec.feature_dim,
                                       prototypes, pair.source_target_map, spec.noise, iso_scale,
                                       rng);
    };
    auto gen_target = [&](const char* tag, std::size_t per_class) {
        return synth_detail::gen_split(std::string("synthetic-target/") + tag,
                                       spec.target_classes, per_class, spec.feature_dim,
                                       prototypes, target_map, spec.noise, iso_scale, rng);
    };

    pair.source.train = gen_source("train", spec.source_train_per_class);
    pair.source.val = gen_source("val", spec.source_val_per_class);
    pair.source.test = gen_source("test", spec.source_test_per_class);
    pair.target.train = gen_target("train", spec.target_train_per_class);
    pair.target.val = gen_target("val", spec.target_val_per_class);
    pair.target.test = gen_target("test", spec.target_test_per_class);
    return pair;
}

} // namespace l2t
