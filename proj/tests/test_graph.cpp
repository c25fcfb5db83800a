#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "l2t/graph.hpp"

using namespace l2t;

TEST_CASE("sum of a parameter gives all-ones gradient") {
    Graph g;
    Var p = g.input(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}), true);
    g.backward(g.sum(p));
    for (std::size_t i = 0; i < 6; ++i) CHECK(g.grad(p)[i] == 1.0);
}

TEST_CASE("sum of squares at p=[1,2] gives grad [2,4]") {
    Graph g;
    Var p = g.input(Tensor({2}, {1.0, 2.0}), true);
    Var loss = g.sum(g.mul(p, p));
    CHECK(g.scalar(loss) == doctest::Approx(5.0));
    g.backward(loss);
    CHECK(g.grad(p)[0] == doctest::Approx(2.0));
    CHECK(g.grad(p)[1] == doctest::Approx(4.0));
}

TEST_CASE("softmax cross-entropy at [0,0], label 0") {
    Graph g;
    Var logits = g.input(Tensor({1, 2}, {0.0, 0.0}), true);
    Var loss = g.sum(g.softmax_xent(logits, {0}));
    CHECK(g.scalar(loss) == doctest::Approx(std::log(2.0)));
    g.backward(loss);
    CHECK(g.grad(logits)[0] == doctest::Approx(-0.5));
    CHECK(g.grad(logits)[1] == doctest::Approx(0.5));
}

TEST_CASE("gradient accumulation is additive over summed losses") {
    Rng rng(11);
    Tensor p0 = Tensor::uniform({2, 2}, -1.0, 1.0, rng);
    Tensor q0 = Tensor::uniform({2, 2}, -1.0, 1.0, rng);

    auto loss1 = [](Graph& g, Var p, Var q) { return g.sum(g.mul(p, q)); };
    auto loss2 = [](Graph& g, Var p, Var q) { return g.sum(g.mul(g.add(p, q), p)); };

    Graph ga;
    Var pa = ga.input(p0, true), qa = ga.input(q0, true);
    ga.backward(ga.add(loss1(ga, pa, qa), loss2(ga, pa, qa)));

    Graph gb;
    Var pb = gb.input(p0, true), qb = gb.input(q0, true);
    gb.backward(loss1(gb, pb, qb));
    Graph gc;
    Var pc = gc.input(p0, true), qc = gc.input(q0, true);
    gc.backward(loss2(gc, pc, qc));

    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(ga.grad(pa)[i] == doctest::Approx(gb.grad(pb)[i] + gc.grad(pc)[i]).epsilon(1e-12));
        CHECK(ga.grad(qa)[i] == doctest::Approx(gb.grad(qb)[i] + gc.grad(qc)[i]).epsilon(1e-12));
    }
}

TEST_CASE("every differentiable op passes a finite-difference spot check") {
    Rng rng(2024);
    for (auto& c : testing::differentiable_op_cases()) {
        for (int i = 0; i < 10; ++i) {
            std::string why;
            const bool ok = c.check(rng, &why);
            CAPTURE(c.name);
            CAPTURE(why);
            REQUIRE(ok);
        }
    }
}

TEST_CASE("non-scalar loss is rejected") {
    Graph g;
    Var p = g.input(Tensor({2}, {1.0, 2.0}), true);
    CHECK_THROWS_AS(g.backward(p), ShapeError);
}

TEST_CASE("non-finite values raise a numeric failure naming the op") {
    Graph g;
    Var a = g.input(Tensor({1}, {1e308}), true);
    CHECK_THROWS_WITH_AS(g.mul(a, a), doctest::Contains("mul"), NumericError);
    CHECK_THROWS_AS(g.input(Tensor({1}, {std::nan("")})), NumericError);
}

TEST_CASE("bad label index is rejected") {
    Graph g;
    Var logits = g.input(Tensor({1, 3}, {0.0, 0.0, 0.0}), true);
    CHECK_THROWS_AS(g.softmax_xent(logits, {3}), Error);
}

TEST_CASE("matmul shape mismatch is rejected") {
    Graph g;
    Var a = g.input(Tensor({2, 3}));
    Var b = g.input(Tensor({2, 3}));
    CHECK_THROWS_AS(g.matmul(a, b), ShapeError);
}

TEST_CASE("maxpool picks the window maximum and routes its gradient") {
    Graph g;
    Var x = g.input(Tensor({1, 1, 2, 2}, {1.0, 4.0, 3.0, 2.0}), true);
    Var y = g.maxpool2x2(x);
    CHECK(g.value(y)[0] == 4.0);
    g.backward(g.sum(y));
    CHECK(g.grad(x)[0] == 0.0);
    CHECK(g.grad(x)[1] == 1.0);
}
