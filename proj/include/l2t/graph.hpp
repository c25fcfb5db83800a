#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "l2t/error.hpp"
#include "l2t/tensor.hpp"

namespace l2t {

// Handle into a Graph's tape.
struct Var {
    int id = -1;
};

enum class Padding { Valid, Same };

// Reverse-mode tape. Nodes are appended in evaluation order, so backward is a
// single reverse sweep — no topological sort needed. One Graph per forward
// pass; nothing here is shared between runs.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // ---- leaves ----------------------------------------------------------

    Var input(Tensor t, bool requires_grad = false) {
        return push("input", std::move(t), requires_grad, nullptr);
    }

    Var constant(Tensor t) { return input(std::move(t), false); }

    // ---- elementwise -----------------------------------------------------

    Var add(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        check_same_shape(ta, tb, "add");
        Tensor out(ta.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ta[i] + tb[i];
        return push("add", std::move(out), needs(a) || needs(b),
                    [a, b](Graph& g, const Tensor& go) {
                        if (g.needs(a))
                            for (std::size_t i = 0; i < go.numel(); ++i) g.grad_ref(a)[i] += go[i];
                        if (g.needs(b))
                            for (std::size_t i = 0; i < go.numel(); ++i) g.grad_ref(b)[i] += go[i];
                    });
    }

    Var sub(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        check_same_shape(ta, tb, "sub");
        Tensor out(ta.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ta[i] - tb[i];
        return push("sub", std::move(out), needs(a) || needs(b),
                    [a, b](Graph& g, const Tensor& go) {
                        if (g.needs(a))
                            for (std::size_t i = 0; i < go.numel(); ++i) g.grad_ref(a)[i] += go[i];
                        if (g.needs(b))
                            for (std::size_t i = 0; i < go.numel(); ++i) g.grad_ref(b)[i] -= go[i];
                    });
    }

    Var mul(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        check_same_shape(ta, tb, "mul");
        Tensor out(ta.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ta[i] * tb[i];
        return push("mul", std::move(out), needs(a) || needs(b),
                    [a, b](Graph& g, const Tensor& go) {
                        const Tensor& ta = g.value(a);
                        const Tensor& tb = g.value(b);
                        if (g.needs(a))
                            for (std::size_t i = 0; i < go.numel(); ++i)
                                g.grad_ref(a)[i] += go[i] * tb[i];
                        if (g.needs(b))
                            for (std::size_t i = 0; i < go.numel(); ++i)
                                g.grad_ref(b)[i] += go[i] * ta[i];
                    });
    }

    Var scale(Var a, double c) {
        const Tensor& ta = value(a);
        Tensor out(ta.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c * ta[i];
        return push("scale", std::move(out), needs(a), [a, c](Graph& g, const Tensor& go) {
            if (!g.needs(a)) return;
            for (std::size_t i = 0; i < go.numel(); ++i) g.grad_ref(a)[i] += c * go[i];
        });
    }

    Var relu(Var a) {
        const Tensor& ta = value(a);
        Tensor out(ta.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ta[i] > 0.0 ? ta[i] : 0.0;
        // subgradient at exactly 0 is taken as 0
        return push("relu", std::move(out), needs(a), [a](Graph& g, const Tensor& go) {
            if (!g.needs(a)) return;
            const Tensor& ta = g.value(a);
            for (std::size_t i = 0; i < go.numel(); ++i)
                if (ta[i] > 0.0) g.grad_ref(a)[i] += go[i];
        });
    }

    // ---- linear algebra ----------------------------------------------------

    // (m,k) x (k,n) -> (m,n)
    Var matmul(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        if (ta.ndim() != 2 || tb.ndim() != 2 || ta.dim(1) != tb.dim(0))
            throw ShapeError("matmul: " + shape_str(ta.shape()) + " x " + shape_str(tb.shape()));
        const std::size_t m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
        Tensor out({m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const double av = ta[i * k + p];
                if (av == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * tb[p * n + j];
            }
        return push("matmul", std::move(out), needs(a) || needs(b),
                    [a, b, m, k, n](Graph& g, const Tensor& go) {
                        const Tensor& ta = g.value(a);
                        const Tensor& tb = g.value(b);
                        if (g.needs(a)) {
                            Tensor& da = g.grad_ref(a); // dA += G * B^T
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) {
                                    const double gv = go[i * n + j];
                                    if (gv == 0.0) continue;
                                    for (std::size_t p = 0; p < k; ++p)
                                        da[i * k + p] += gv * tb[p * n + j];
                                }
                        }
                        if (g.needs(b)) {
                            Tensor& db = g.grad_ref(b); // dB += A^T * G
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t p = 0; p < k; ++p) {
                                    const double av = ta[i * k + p];
                                    if (av == 0.0) continue;
                                    for (std::size_t j = 0; j < n; ++j)
                                        db[p * n + j] += av * go[i * n + j];
                                }
                        }
                    });
    }

    // (m,n) + (n) broadcast over rows (bias add)
    Var add_rowvec(Var a, Var v) {
        const Tensor& ta = value(a);
        const Tensor& tv = value(v);
        if (ta.ndim() != 2 || tv.ndim() != 1 || tv.dim(0) != ta.dim(1))
            throw ShapeError("add_rowvec: " + shape_str(ta.shape()) + " + " +
                             shape_str(tv.shape()));
        const std::size_t m = ta.dim(0), n = ta.dim(1);
        Tensor out({m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] = ta[i * n + j] + tv[j];
        return push("add_rowvec", std::move(out), needs(a) || needs(v),
                    [a, v, m, n](Graph& g, const Tensor& go) {
                        if (g.needs(a)) {
                            Tensor& da = g.grad_ref(a);
                            for (std::size_t i = 0; i < go.numel(); ++i) da[i] += go[i];
                        }
                        if (g.needs(v)) {
                            Tensor& dv = g.grad_ref(v);
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) dv[j] += go[i * n + j];
                        }
                    });
    }

    // ---- convolutional stack ----------------------------------------------

    // x (N,C,H,W) * w (F,C,kh,kw), stride 1. Same padding requires odd kernels.
    Var conv2d(Var x, Var w, Padding pad) {
        const Tensor& tx = value(x);
        const Tensor& tw = value(w);
        if (tx.ndim() != 4 || tw.ndim() != 4 || tx.dim(1) != tw.dim(1))
            throw ShapeError("conv2d: " + shape_str(tx.shape()) + " * " + shape_str(tw.shape()));
        const std::size_t N = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
        const std::size_t F = tw.dim(0), kh = tw.dim(2), kw = tw.dim(3);
        std::size_t ph = 0, pw = 0, Ho, Wo;
        if (pad == Padding::Same) {
            if (kh % 2 == 0 || kw % 2 == 0)
                throw ShapeError("conv2d same padding needs odd kernel, got " +
                                 shape_str(tw.shape()));
            ph = (kh - 1) / 2;
            pw = (kw - 1) / 2;
            Ho = H;
            Wo = W;
        } else {
            if (kh > H || kw > W)
                throw ShapeError("conv2d valid: kernel larger than input");
            Ho = H - kh + 1;
            Wo = W - kw + 1;
        }
        Tensor out({N, F, Ho, Wo});
        auto xi = [C, H, W](std::size_t n, std::size_t c, std::size_t i, std::size_t j) {
            return ((n * C + c) * H + i) * W + j;
        };
        auto wi = [C, kh, kw](std::size_t f, std::size_t c, std::size_t p, std::size_t q) {
            return ((f * C + c) * kh + p) * kw + q;
        };
        auto oi = [F, Ho, Wo](std::size_t n, std::size_t f, std::size_t i, std::size_t j) {
            return ((n * F + f) * Ho + i) * Wo + j;
        };
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t f = 0; f < F; ++f)
                for (std::size_t i = 0; i < Ho; ++i)
                    for (std::size_t j = 0; j < Wo; ++j) {
                        double acc = 0.0;
                        for (std::size_t c = 0; c < C; ++c)
                            for (std::size_t p = 0; p < kh; ++p) {
                                const std::size_t ii = i + p;
                                if (ii < ph || ii - ph >= H) continue;
                                for (std::size_t q = 0; q < kw; ++q) {
                                    const std::size_t jj = j + q;
                                    if (jj < pw || jj - pw >= W) continue;
                                    acc += tx[xi(n, c, ii - ph, jj - pw)] * tw[wi(f, c, p, q)];
                                }
                            }
                        out[oi(n, f, i, j)] = acc;
                    }
        return push("conv2d", std::move(out), needs(x) || needs(w),
                    [x, w, N, C, H, W, F, kh, kw, ph, pw, Ho, Wo, xi, wi, oi](
                        Graph& g, const Tensor& go) {
                        const Tensor& tx = g.value(x);
                        const Tensor& tw = g.value(w);
                        const bool nx = g.needs(x), nw = g.needs(w);
                        for (std::size_t n = 0; n < N; ++n)
                            for (std::size_t f = 0; f < F; ++f)
                                for (std::size_t i = 0; i < Ho; ++i)
                                    for (std::size_t j = 0; j < Wo; ++j) {
                                        const double gv = go[oi(n, f, i, j)];
                                        if (gv == 0.0) continue;
                                        for (std::size_t c = 0; c < C; ++c)
                                            for (std::size_t p = 0; p < kh; ++p) {
                                                const std::size_t ii = i + p;
                                                if (ii < ph || ii - ph >= H) continue;
                                                for (std::size_t q = 0; q < kw; ++q) {
                                                    const std::size_t jj = j + q;
                                                    if (jj < pw || jj - pw >= W) continue;
                                                    if (nx)
                                                        g.grad_ref(x)[xi(n, c, ii - ph, jj - pw)] +=
                                                            gv * tw[wi(f, c, p, q)];
                                                    if (nw)
                                                        g.grad_ref(w)[wi(f, c, p, q)] +=
                                                            gv * tx[xi(n, c, ii - ph, jj - pw)];
                                                }
                                            }
                                    }
                    });
    }

    // x (N,F,H,W) + v (F) broadcast per channel
    Var add_chanvec(Var a, Var v) {
        const Tensor& ta = value(a);
        const Tensor& tv = value(v);
        if (ta.ndim() != 4 || tv.ndim() != 1 || tv.dim(0) != ta.dim(1))
            throw ShapeError("add_chanvec: " + shape_str(ta.shape()) + " + " +
                             shape_str(tv.shape()));
        const std::size_t N = ta.dim(0), F = ta.dim(1), HW = ta.dim(2) * ta.dim(3);
        Tensor out(ta.shape());
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t f = 0; f < F; ++f)
                for (std::size_t s = 0; s < HW; ++s)
                    out[(n * F + f) * HW + s] = ta[(n * F + f) * HW + s] + tv[f];
        return push("add_chanvec", std::move(out), needs(a) || needs(v),
                    [a, v, N, F, HW](Graph& g, const Tensor& go) {
                        if (g.needs(a)) {
                            Tensor& da = g.grad_ref(a);
                            for (std::size_t i = 0; i < go.numel(); ++i) da[i] += go[i];
                        }
                        if (g.needs(v)) {
                            Tensor& dv = g.grad_ref(v);
                            for (std::size_t n = 0; n < N; ++n)
                                for (std::size_t f = 0; f < F; ++f)
                                    for (std::size_t s = 0; s < HW; ++s)
                                        dv[f] += go[(n * F + f) * HW + s];
                        }
                    });
    }

    // 2x2 window, stride 2. Ties go to the first element in scan order.
    Var maxpool2x2(Var x) {
        const Tensor& tx = value(x);
        if (tx.ndim() != 4 || tx.dim(2) % 2 != 0 || tx.dim(3) % 2 != 0)
            throw ShapeError("maxpool2x2 needs (N,C,2h,2w), got " + shape_str(tx.shape()));
        const std::size_t N = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
        const std::size_t Ho = H / 2, Wo = W / 2;
        Tensor out({N, C, Ho, Wo});
        std::vector<std::size_t> argmax(out.numel());
        std::size_t o = 0;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < Ho; ++i)
                    for (std::size_t j = 0; j < Wo; ++j, ++o) {
                        std::size_t best = ((n * C + c) * H + 2 * i) * W + 2 * j;
                        for (std::size_t p = 0; p < 2; ++p)
                            for (std::size_t q = 0; q < 2; ++q) {
                                const std::size_t idx =
                                    ((n * C + c) * H + 2 * i + p) * W + 2 * j + q;
                                if (tx[idx] > tx[best]) best = idx;
                            }
                        out[o] = tx[best];
                        argmax[o] = best;
                    }
        return push("maxpool2x2", std::move(out), needs(x),
                    [x, argmax = std::move(argmax)](Graph& g, const Tensor& go) {
                        if (!g.needs(x)) return;
                        Tensor& dx = g.grad_ref(x);
                        for (std::size_t i = 0; i < go.numel(); ++i) dx[argmax[i]] += go[i];
                    });
    }

    // Contiguous reshape; gradient is a reshape back.
    Var reshape(Var x, Shape shape) {
        const Tensor& tx = value(x);
        if (shape_numel(shape) != tx.numel())
            throw ShapeError("reshape " + shape_str(tx.shape()) + " -> " + shape_str(shape));
        Tensor out(std::move(shape), tx.values());
        return push("reshape", std::move(out), needs(x), [x](Graph& g, const Tensor& go) {
            if (!g.needs(x)) return;
            Tensor& dx = g.grad_ref(x);
            for (std::size_t i = 0; i < go.numel(); ++i) dx[i] += go[i];
        });
    }

    // (N, ...) -> (N, rest)
    Var flatten(Var x) {
        const Tensor& tx = value(x);
        if (tx.ndim() < 2) throw ShapeError("flatten needs ndim >= 2");
        return reshape(x, {tx.dim(0), tx.numel() / tx.dim(0)});
    }

    // ---- losses ------------------------------------------------------------

    // logits (N,C), labels[i] < C -> per-example loss vector (N)
    Var softmax_xent(Var logits, std::vector<std::size_t> labels) {
        const Tensor& tl = value(logits);
        if (tl.ndim() != 2 || labels.size() != tl.dim(0))
            throw ShapeError("softmax_xent: logits " + shape_str(tl.shape()) + ", " +
                             std::to_string(labels.size()) + " labels");
        const std::size_t N = tl.dim(0), C = tl.dim(1);
        for (std::size_t i = 0; i < N; ++i)
            if (labels[i] >= C)
                throw Error("softmax_xent: label " + std::to_string(labels[i]) +
                            " out of range for " + std::to_string(C) + " classes");
        Tensor out({N});
        for (std::size_t i = 0; i < N; ++i)
            out[i] = row_logsumexp(tl, i) - tl.at(i, labels[i]);
        return push("softmax_xent", std::move(out), needs(logits),
                    [logits, labels = std::move(labels), N, C](Graph& g, const Tensor& go) {
                        if (!g.needs(logits)) return;
                        const Tensor& tl = g.value(logits);
                        Tensor& dl = g.grad_ref(logits);
                        for (std::size_t i = 0; i < N; ++i) {
                            const double lse = row_logsumexp(tl, i);
                            for (std::size_t j = 0; j < C; ++j) {
                                double p = std::exp(tl.at(i, j) - lse);
                                if (j == labels[i]) p -= 1.0;
                                dl[i * C + j] += go[i] * p;
                            }
                        }
                    });
    }

    // logits (N,C), targets (N,C) in [0,1] -> per-example loss vector (N),
    // summed over the C label columns
    Var sigmoid_bce(Var logits, Tensor targets) {
        const Tensor& tl = value(logits);
        if (!tl.same_shape(targets) || tl.ndim() != 2)
            throw ShapeError("sigmoid_bce: logits " + shape_str(tl.shape()) + ", targets " +
                             shape_str(targets.shape()));
        const std::size_t N = tl.dim(0), C = tl.dim(1);
        Tensor out({N});
        for (std::size_t i = 0; i < N; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < C; ++j) {
                const double x = tl.at(i, j);
                // softplus(x) - t*x, evaluated stably
                acc += std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))) -
                       targets.at(i, j) * x;
            }
            out[i] = acc;
        }
        return push("sigmoid_bce", std::move(out), needs(logits),
                    [logits, targets = std::move(targets), N, C](Graph& g, const Tensor& go) {
                        if (!g.needs(logits)) return;
                        const Tensor& tl = g.value(logits);
                        Tensor& dl = g.grad_ref(logits);
                        for (std::size_t i = 0; i < N; ++i)
                            for (std::size_t j = 0; j < C; ++j) {
                                const double x = tl.at(i, j);
                                const double sig = 1.0 / (1.0 + std::exp(-x));
                                dl[i * C + j] += go[i] * (sig - targets.at(i, j));
                            }
                    });
    }

    // ---- reductions ----------------------------------------------------------

    Var sum(Var a) {
        const Tensor& ta = value(a);
        return push("sum", Tensor::scalar(ta.sum()), needs(a),
                    [a](Graph& g, const Tensor& go) {
                        if (!g.needs(a)) return;
                        Tensor& da = g.grad_ref(a);
                        for (std::size_t i = 0; i < da.numel(); ++i) da[i] += go[0];
                    });
    }

    Var mean(Var a) {
        const Tensor& ta = value(a);
        const double inv = 1.0 / static_cast<double>(ta.numel());
        return push("mean", Tensor::scalar(ta.sum() * inv), needs(a),
                    [a, inv](Graph& g, const Tensor& go) {
                        if (!g.needs(a)) return;
                        Tensor& da = g.grad_ref(a);
                        for (std::size_t i = 0; i < da.numel(); ++i) da[i] += go[0] * inv;
                    });
    }

    // ---- backward ------------------------------------------------------------

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Grads are
    // zeroed first, so repeated calls produce identical results.
    void backward(Var loss) {
        if (value(loss).numel() != 1)
            throw ShapeError("backward: loss must be scalar, got " +
                             shape_str(value(loss).shape()));
        for (auto& n : nodes_) {
            if (n.requires_grad) {
                n.grad = Tensor(n.value.shape());
            }
        }
        if (!nodes_[static_cast<std::size_t>(loss.id)].requires_grad) return;
        grad_ref(loss)[0] = 1.0;
        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.requires_grad && n.back) n.back(*this, n.grad);
        }
    }

    const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }

    double scalar(Var v) const {
        const Tensor& t = value(v);
        if (t.numel() != 1) throw ShapeError("scalar() on " + shape_str(t.shape()));
        return t[0];
    }

    const Tensor& grad(Var v) const {
        const Node& n = nodes_[static_cast<std::size_t>(v.id)];
        if (!n.requires_grad || n.grad.numel() == 0)
            throw Error("grad requested for a node without gradient");
        return n.grad;
    }

    bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::function<void(Graph&, const Tensor&)> back;
    };

    Tensor& grad_ref(Var v) { return nodes_[static_cast<std::size_t>(v.id)].grad; }

    Var push(const char* opname, Tensor value, bool requires_grad,
             std::function<void(Graph&, const Tensor&)> back) {
        if (!value.all_finite())
            throw NumericError(std::string("op ") + opname + " produced a non-finite value");
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        if (requires_grad) n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    static double row_logsumexp(const Tensor& t, std::size_t row) {
        const std::size_t C = t.dim(1);
        double mx = t.at(row, 0);
        for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, t.at(row, j));
        double s = 0.0;
        for (std::size_t j = 0; j < C; ++j) s += std::exp(t.at(row, j) - mx);
        return mx + std::log(s);
    }

    std::vector<Node> nodes_;
};

} // namespace l2t
