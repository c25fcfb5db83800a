#pragma once

// Shared-encoder, two-head classifier: source and target heads are affine
// maps over one encoder's features, so encoder updates move both heads'
// outputs while each head's own weights stay private to it.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "l2t/dataset.hpp"
#include "l2t/error.hpp"
#include "l2t/graph.hpp"
#include "l2t/rng.hpp"
#include "l2t/tensor.hpp"

namespace l2t {

enum class EncoderKind { Mlp, LeNet };

struct ModelConfig {
    EncoderKind encoder = EncoderKind::Mlp;
    Shape input_shape;                        // per-example feature shape
    std::vector<std::size_t> hidden{64, 32};  // MLP widths; feature dim is the last
    std::size_t source_classes = 10;
    std::size_t target_classes = 5;
    double weight_decay = 0.0;
    std::uint64_t init_seed = 1;

    std::size_t input_dim() const { return shape_numel(input_shape); }

    std::size_t feature_dim() const {
        if (encoder == EncoderKind::LeNet) return 84;
        if (hidden.empty()) throw Error("mlp encoder needs at least one hidden width");
        return hidden.back();
    }

    void validate() const {
        if (input_shape.empty() || input_dim() == 0) throw Error("model: empty input shape");
        if (source_classes == 0 || target_classes == 0)
            throw Error("model: class counts must be positive");
        if (encoder == EncoderKind::Mlp) {
            if (hidden.empty()) throw Error("model: mlp needs hidden widths");
            for (std::size_t w : hidden)
                if (w == 0) throw Error("model: zero hidden width");
        } else {
            if (input_shape.size() != 2 && input_shape.size() != 3)
                throw Error("model: lenet input must be (H,W) or (C,H,W), got " +
                            shape_str(input_shape));
        }
        if (weight_decay < 0) throw Error("model: negative weight decay");
    }
};

class Model {
public:
    explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        Rng rng(cfg_.init_seed);
        build_encoder(rng);
        init_head(head_s_w_, head_s_b_, cfg_.source_classes, rng);
        init_head(head_t_w_, head_t_b_, cfg_.target_classes, rng);
    }

    const ModelConfig& config() const { return cfg_; }

    // Parameter leaves bound into one graph. Bind once per forward pass.
    struct Bound {
        std::vector<Var> encoder;
        Var head_s_w, head_s_b, head_t_w, head_t_b;
        bool trainable;
    };

    Bound bind(Graph& g, bool trainable) const {
        Bound b;
        b.trainable = trainable;
        for (const Tensor& t : encoder_) b.encoder.push_back(g.input(t, trainable));
        b.head_s_w = g.input(head_s_w_, trainable);
        b.head_s_b = g.input(head_s_b_, trainable);
        b.head_t_w = g.input(head_t_w_, trainable);
        b.head_t_b = g.input(head_t_b_, trainable);
        return b;
    }

    // features (B, feature_dim)
    Var encode(Graph& g, const Bound& b, Var x) const {
        if (cfg_.encoder == EncoderKind::Mlp) {
            Var h = g.flatten(x);
            if (g.value(h).dim(1) != cfg_.input_dim())
                throw ShapeError("encode: input " + shape_str(g.value(x).shape()) +
                                 " does not match configured " + shape_str(cfg_.input_shape));
            for (std::size_t l = 0; l < cfg_.hidden.size(); ++l)
                h = g.relu(g.add_rowvec(g.matmul(h, b.encoder[2 * l]), b.encoder[2 * l + 1]));
            return h;
        }
        return encode_lenet(g, b, x);
    }

    Var source_logits(Graph& g, const Bound& b, Var features) const {
        return g.add_rowvec(g.matmul(features, b.head_s_w), b.head_s_b);
    }

    Var target_logits(Graph& g, const Bound& b, Var features) const {
        return g.add_rowvec(g.matmul(features, b.head_t_w), b.head_t_b);
    }

    // element i = softmax cross-entropy of row i against labels[i]
    static Var per_example_loss(Graph& g, Var logits, const std::vector<std::size_t>& labels) {
        return g.softmax_xent(logits, labels);
    }

    // weight_decay * sum of squares over the encoder plus the named heads
    Var decay_term(Graph& g, const Bound& b, bool include_source_head,
                   bool include_target_head) const {
        std::vector<Var> parts;
        for (Var v : b.encoder) parts.push_back(v);
        if (include_source_head) {
            parts.push_back(b.head_s_w);
            parts.push_back(b.head_s_b);
        }
        if (include_target_head) {
            parts.push_back(b.head_t_w);
            parts.push_back(b.head_t_b);
        }
        Var acc = g.constant(Tensor::scalar(0.0));
        for (Var v : parts) acc = g.add(acc, g.sum(g.mul(v, v)));
        return g.scale(acc, cfg_.weight_decay);
    }

    // Evaluation-only forward; no gradients are tracked.
    Tensor eval_target_logits(const Batch& batch) const {
        Graph g;
        Bound b = bind(g, false);
        Var x = g.input(batch.features);
        return g.value(target_logits(g, b, encode(g, b, x)));
    }

    Tensor eval_source_logits(const Batch& batch) const {
        Graph g;
        Bound b = bind(g, false);
        Var x = g.input(batch.features);
        return g.value(source_logits(g, b, encode(g, b, x)));
    }

    // Fixed order: encoder tensors, then source head, then target head.
    std::vector<std::pair<std::string, Tensor*>> named_parameters() {
        std::vector<std::pair<std::string, Tensor*>> out;
        for (std::size_t i = 0; i < encoder_.size(); ++i)
            out.emplace_back(encoder_names_[i], &encoder_[i]);
        out.emplace_back("head_s.w", &head_s_w_);
        out.emplace_back("head_s.b", &head_s_b_);
        out.emplace_back("head_t.w", &head_t_w_);
        out.emplace_back("head_t.b", &head_t_b_);
        return out;
    }

    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> out;
        for (auto& [name, t] : named_parameters()) out.push_back(t);
        return out;
    }

    // Gradients in the same order as parameters(), from a bound graph.
    std::vector<const Tensor*> bound_grads(const Graph& g, const Bound& b) const {
        std::vector<const Tensor*> out;
        for (Var v : b.encoder) out.push_back(&g.grad(v));
        out.push_back(&g.grad(b.head_s_w));
        out.push_back(&g.grad(b.head_s_b));
        out.push_back(&g.grad(b.head_t_w));
        out.push_back(&g.grad(b.head_t_b));
        return out;
    }

    void reinit_target_head(std::uint64_t seed) {
        Rng rng(seed);
        init_head(head_t_w_, head_t_b_, cfg_.target_classes, rng);
    }

    void save_checkpoint(const std::string& path) {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write checkpoint '" + path + "'");
        out << "l2t-model v1\n";
        auto params = named_parameters();
        out << "tensors " << params.size() << "\n";
        char buf[40];
        for (auto& [name, t] : params) {
            out << "tensor " << name << " " << t->ndim();
            for (std::size_t d : t->shape()) out << " " << d;
            out << "\n";
            for (std::size_t i = 0; i < t->numel(); ++i) {
                std::snprintf(buf, sizeof(buf), "%.17g", (*t)[i]);
                out << buf << (i + 1 == t->numel() ? "" : " ");
            }
            out << "\n";
        }
    }

    void load_checkpoint(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot read checkpoint '" + path + "'");
        std::string line;
        if (!std::getline(in, line) || line != "l2t-model v1")
            throw DataError("'" + path + "': not a l2t-model v1 checkpoint");
        std::size_t count = 0;
        in >> line >> count;
        auto params = named_parameters();
        if (count != params.size())
            throw DataError("'" + path + "': has " + std::to_string(count) + " tensors, model " +
                            "needs " + std::to_string(params.size()));
        for (auto& [name, t] : params) {
            std::string tag, got_name;
            std::size_t ndim = 0;
            in >> tag >> got_name >> ndim;
            if (tag != "tensor" || got_name != name)
                throw DataError("'" + path + "': expected tensor " + name + ", found " +
                                got_name);
            Shape shape(ndim);
            for (auto& d : shape) in >> d;
            if (shape != t->shape())
                throw DataError("'" + path + "': tensor " + name + " has shape " +
                                shape_str(shape) + ", model needs " + shape_str(t->shape()));
            for (std::size_t i = 0; i < t->numel(); ++i) in >> (*t)[i];
            if (!in) throw DataError("'" + path + "': truncated values for tensor " + name);
        }
    }

private:
    // fan-in scaled uniform, biases zero
    static Tensor init_weight(Shape shape, std::size_t fan_in, Rng& rng) {
        const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
        return Tensor::uniform(std::move(shape), -a, a, rng);
    }

    void init_head(Tensor& w, Tensor& b, std::size_t classes, Rng& rng) {
        w = init_weight({cfg_.feature_dim(), classes}, cfg_.feature_dim(), rng);
        b = Tensor({classes});
    }

    void push_param(const std::string& name, Tensor t) {
        encoder_names_.push_back(name);
        encoder_.push_back(std::move(t));
    }

    void build_encoder(Rng& rng) {
        encoder_.clear();
        encoder_names_.clear();
        if (cfg_.encoder == EncoderKind::Mlp) {
            std::size_t in = cfg_.input_dim();
            for (std::size_t l = 0; l < cfg_.hidden.size(); ++l) {
                const std::size_t outw = cfg_.hidden[l];
                push_param("encoder." + std::to_string(l) + ".w",
                           init_weight({in, outw}, in, rng));
                push_param("encoder." + std::to_string(l) + ".b", Tensor({outw}));
                in = outw;
            }
            return;
        }
        // conv5x5(6)-pool-conv5x5(16)-pool-fc120-fc84
        const std::size_t C = cfg_.input_shape.size() == 3 ? cfg_.input_shape[0] : 1;
        const std::size_t H = cfg_.input_shape[cfg_.input_shape.size() - 2];
        const std::size_t W = cfg_.input_shape[cfg_.input_shape.size() - 1];
        if (H < 12 || W < 12)
            throw Error("lenet encoder needs at least 12x12 inputs, got " +
                        shape_str(cfg_.input_shape));
        push_param("encoder.conv1.w", init_weight({6, C, 5, 5}, C * 25, rng));
        push_param("encoder.conv1.b", Tensor({6}));
        push_param("encoder.conv2.w", init_weight({16, 6, 5, 5}, 6 * 25, rng));
        push_param("encoder.conv2.b", Tensor({16}));
        const std::size_t h2 = (H - 4) / 2, w2 = (W - 4) / 2;
        const std::size_t flat = 16 * ((h2 - 4) / 2) * ((w2 - 4) / 2);
        push_param("encoder.fc1.w", init_weight({flat, 120}, flat, rng));
        push_param("encoder.fc1.b", Tensor({120}));
        push_param("encoder.fc2.w", init_weight({120, 84}, 120, rng));
        push_param("encoder.fc2.b", Tensor({84}));
    }

    Var encode_lenet(Graph& g, const Bound& b, Var x) const {
        const Tensor& tx = g.value(x);
        if (tx.ndim() == 3) x = g.reshape(x, {tx.dim(0), 1, tx.dim(1), tx.dim(2)});
        Var h = g.relu(g.add_chanvec(g.conv2d(x, b.encoder[0], Padding::Valid), b.encoder[1]));
        h = g.maxpool2x2(h);
        h = g.relu(g.add_chanvec(g.conv2d(h, b.encoder[2], Padding::Valid), b.encoder[3]));
        h = g.maxpool2x2(h);
        h = g.flatten(h);
        h = g.relu(g.add_rowvec(g.matmul(h, b.encoder[4]), b.encoder[5]));
        h = g.relu(g.add_rowvec(g.matmul(h, b.encoder[6]), b.encoder[7]));
        return h;
    }

    ModelConfig cfg_;
    std::vector<Tensor> encoder_;
    std::vector<std::string> encoder_names_;
    Tensor head_s_w_, head_s_b_, head_t_w_, head_t_b_;
};

} // namespace l2t
