#pragma once

// Central finite-difference oracle for gradient checks. Independent of the
// backward pass: it only ever calls the forward path of the graph.

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "l2t/graph.hpp"
#include "l2t/rng.hpp"
#include "l2t/tensor.hpp"

namespace l2t::testing {

// Builds a scalar loss from differentiable inputs. The same builder is used
// for the analytic backward pass and for the finite-difference probes.
using LossBuilder = std::function<Var(Graph&, const std::vector<Var>&)>;

struct GradCheck {
    double h = 1e-5;
    double rtol = 1e-3;

    // Relative comparison with an absolute floor for near-zero gradients.
    bool close(double a, double b) const {
        const double scale = std::max({1.0, std::abs(a), std::abs(b)});
        return std::abs(a - b) <= rtol * scale;
    }

    bool run(const LossBuilder& f, std::vector<Tensor> inputs, std::string* why = nullptr) const {
        auto eval = [&](const std::vector<Tensor>& ts) {
            Graph g;
            std::vector<Var> vars;
            vars.reserve(ts.size());
            for (const auto& t : ts) vars.push_back(g.input(t, true));
            return g.scalar(f(g, vars));
        };

        Graph g;
        std::vector<Var> vars;
        for (const auto& t : inputs) vars.push_back(g.input(t, true));
        Var loss = f(g, vars);
        g.backward(loss);

        for (std::size_t k = 0; k < inputs.size(); ++k) {
            const Tensor& analytic = g.grad(vars[k]);
            for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
                std::vector<Tensor> plus = inputs;
                std::vector<Tensor> minus = inputs;
                plus[k][i] += h;
                minus[k][i] -= h;
                const double fd = (eval(plus) - eval(minus)) / (2.0 * h);
                if (!close(analytic[i], fd)) {
                    if (why) {
                        char buf[160];
                        std::snprintf(buf, sizeof(buf),
                                      "input %zu elem %zu: analytic %.9g vs fd %.9g", k, i,
                                      analytic[i], fd);
                        *why = buf;
                    }
                    return false;
                }
            }
        }
        return true;
    }
};

// Projects a non-scalar op output to a scalar through a fixed random linear
// functional so every output component participates in the check.
inline Var project(Graph& g, Var v, Rng& rng) {
    Tensor w(g.value(v).shape());
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-1.0, 1.0);
    return g.sum(g.mul(v, g.constant(std::move(w))));
}

// Random tensor whose entries stay clear of a kink at zero (ReLU).
inline Tensor away_from_zero(const Shape& shape, Rng& rng, double margin = 1e-2) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        double v = rng.uniform(-2.0, 2.0);
        if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
        t[i] = v;
    }
    return t;
}

// One gradient-check instance for each differentiable op, driven by `rng`.
// Returns names paired with pass/fail so callers can report per-op results.
struct OpCase {
    std::string name;
    std::function<bool(Rng&, std::string*)> check;
};

inline std::vector<OpCase> differentiable_op_cases() {
    GradCheck gc;
    std::vector<OpCase> cases;

    auto binary = [gc](const char* name, auto op) {
        return OpCase{name, [gc, op](Rng& rng, std::string* why) {
                          Shape s{2 + rng.index(3), 1 + rng.index(4)};
                          Tensor a = Tensor::uniform(s, -2.0, 2.0, rng);
                          Tensor b = Tensor::uniform(s, -2.0, 2.0, rng);
                          const std::uint64_t pseed = rng.next_u64();
                          return gc.run(
                              [&, pseed](Graph& g, const std::vector<Var>& v) {
                                  Rng proj(pseed);
                                  return project(g, op(g, v[0], v[1]), proj);
                              },
                              {a, b}, why);
                      }};
    };
    cases.push_back(binary("add", [](Graph& g, Var a, Var b) { return g.add(a, b); }));
    cases.push_back(binary("sub", [](Graph& g, Var a, Var b) { return g.sub(a, b); }));
    cases.push_back(binary("mul", [](Graph& g, Var a, Var b) { return g.mul(a, b); }));

    cases.push_back({"scale", [gc](Rng& rng, std::string* why) {
                         Tensor a = Tensor::uniform({3, 2}, -2.0, 2.0, rng);
                         const double c = rng.uniform(-3.0, 3.0);
                         const std::uint64_t pseed = rng.next_u64();
                         return gc.run(
                             [&, pseed](Graph& g, const std::vector<Var>& v) {
                                 Rng proj(pseed);
                                 return project(g, g.scale(v[0], c), proj);
                             },
                             {a}, why);
                     }});

    cases.push_back({"relu", [gc](Rng& rng, std::string* why) {
                         Tensor a = away_from_zero({2 + rng.index(3), 3}, rng);
                         const std::uint64_t pseed = rng.next_u64();
                         return gc.run(
                             [&, pseed](Graph& g, const std::vector<Var>& v) {
                                 Rng proj(pseed);
                                 return project(g, g.relu(v[0]), proj);
                             },
                             {a}, why);
                     }});

    cases.push_back({"matmul", [gc](Rng& rng, std::string* why) {
                         const std::size_t m = 1 + rng.index(3), k = 1 + rng.index(3),
                                           n = 1 + rng.index(3);
                         Tensor a = Tensor::uniform({m, k}, -2.0, 2.0, rng);
                         Tensor b = Tensor::uniform({k, n}, -2.0, 2.0, rng);
                         const std::uint64_t pseed = rng.next_u64();
                         return gc.run(
                             [&, pseed](Graph& g, const std::vector<Var>& v) {
                                 Rng proj(pseed);
                                 return project(g, g.matmul(v[0], v[1]), proj);
                             },
                             {a, b}, why);
                     }});

    cases.push_back({"add_rowvec", [gc](Rng& rng, std::string* why) {
                         const std::size_t m = 1 + rng.index(4), n = 1 + rng.index(4);
                         Tensor a = Tensor::uniform({m, n}, -2.0, 2.0, rng);
                         Tensor v = Tensor::uniform({n}, -2.0, 2.0, rng);
                         const std::uint64_t pseed = rng.next_u64();
                         return gc.run(
                             [&, pseed](Graph& g, const std::vector<Var>& vs) {
                                 Rng proj(pseed);
                                 return project(g, g.add_rowvec(vs[0], vs[1]), proj);
                             },
                             {a, v}, why);
                     }});

    auto conv_case = [gc](const char* name, Padding pad) {
        return OpCase{name, [gc, pad](Rng& rng, std::string* why) {
                          const std::size_t N = 1 + rng.index(2), C = 1 + rng.index(2);
                          const std::size_t H = 4 + rng.index(2), W = 4 + rng.index(2);
                          const std::size_t F = 1 + rng.index(2), k = 3;
                          Tensor x = Tensor::uniform({N, C, H, W}, -1.0, 1.0, rng);
                          Tensor w = Tensor::uniform({F, C, k, k}, -1.0, 1.0, rng);
                          const std::uint64_t pseed = rng.next_u64();
                          return gc.run(
                              [&, pseed](Graph& g, const std::vector<Var>& v) {
                                  Rng proj(pseed);
                                  return project(g, g.conv2d(v[0], v[1], pad), proj);
                              },
                              {x, w}, why);
                      }};
    };
    cases.push_back(conv_case("conv2d_valid", Padding::Valid));
    cases.push_back(conv_case("conv2d_same", Padding::Same));

    cases.push_back({"add_chanvec", [gc](Rng& rng, std::string* why) {
                         const std::size_t F = 1 + rng.index(3);
                         Tensor x = Tensor::uniform({2, F, 2, 3}, -1.0, 1.0, rng);
                         Tensor v = Tensor::uniform({F}, -1.0, 1.0, rng);
                         const std::uint64_t pseed = rng.next_u64();
                         return gc.run(
                             [&, pseed](Graph& g, const std::vector<Var>& vs) {
                                 Rng proj(pseed);
                                 return project(g, g.add_chanvec(vs[0], vs[1]), proj);
                             },
                             {x, v}, why);
                     }});

    cases.push_back({"maxpool2x2", [gc](Rng& rng, std::string* why) {
                         // keep window entries separated so FD never crosses a tie
                         Tensor x({1, 2, 4, 4});
                         std::vector<double> vals(x.numel());
                         for (std::size_t i = 0; i < vals.size(); ++i)
                             vals[i] = static_cast<double>(i) * 0.05;
                         for (std::size_t i = vals.size(); i > 1; --i)
                             std::swap(vals[i - 1], vals[rng.index(i)]);
                         for (std::size_t i = 0; i < vals.size(); ++i) x[i] = vals[i];
                         const std::uint64_t pseed = rng.next_u64();
                         return gc.run(
                             [&, pseed](Graph& g, const std::vector<Var>& v) {
                                 Rng proj(pseed);
                                 return project(g, g.maxpool2x2(v[0]), proj);
                             },
                             {x}, why);
                     }});

    cases.push_back({"flatten", [gc](Rng& rng, std::string* why) {
                         Tensor x = Tensor::uniform({2, 2, 3}, -2.0, 2.0, rng);
                         const std::uint64_t pseed = rng.next_u64();
                         return gc.run(
                             [&, pseed](Graph& g, const std::vector<Var>& v) {
                                 Rng proj(pseed);
                                 return project(g, g.flatten(v[0]), proj);
                             },
                             {x}, why);
                     }});

    cases.push_back({"softmax_xent", [gc](Rng& rng, std::string* why) {
                         const std::size_t N = 2 + rng.index(3), C = 2 + rng.index(4);
                         Tensor logits = Tensor::uniform({N, C}, -3.0, 3.0, rng);
                         std::vector<std::size_t> labels(N);
                         for (auto& l : labels) l = rng.index(C);
                         const std::uint64_t pseed = rng.next_u64();
                         return gc.run(
                             [&, pseed](Graph& g, const std::vector<Var>& v) {
                                 Rng proj(pseed);
                                 return project(g, g.softmax_xent(v[0], labels), proj);
                             },
                             {logits}, why);
                     }});

    cases.push_back({"sigmoid_bce", [gc](Rng& rng, std::string* why) {
                         const std::size_t N = 2 + rng.index(3), C = 1 + rng.index(4);
                         Tensor logits = Tensor::uniform({N, C}, -3.0, 3.0, rng);
                         Tensor targets(logits.shape());
                         for (std::size_t i = 0; i < targets.numel(); ++i)
                             targets[i] = rng.index(2) ? 1.0 : 0.0;
                         const std::uint64_t pseed = rng.next_u64();
                         return gc.run(
                             [&, pseed](Graph& g, const std::vector<Var>& v) {
                                 Rng proj(pseed);
                                 return project(g, g.sigmoid_bce(v[0], targets), proj);
                             },
                             {logits}, why);
                     }});

    cases.push_back({"sum", [gc](Rng& rng, std::string* why) {
                         Tensor x = Tensor::uniform({2, 1 + rng.index(5)}, -2.0, 2.0, rng);
                         return gc.run(
                             [&](Graph& g, const std::vector<Var>& v) { return g.sum(v[0]); },
                             {x}, why);
                     }});

    cases.push_back({"mean", [gc](Rng& rng, std::string* why) {
                         Tensor x = Tensor::uniform({3, 1 + rng.index(5)}, -2.0, 2.0, rng);
                         return gc.run(
                             [&](Graph& g, const std::vector<Var>& v) { return g.mean(v[0]); },
                             {x}, why);
                     }});

    return cases;
}

} // namespace l2t::testing
