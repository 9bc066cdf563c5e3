#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "rppgm/ad/param_vector.hpp"
#include "rppgm/ad/tape.hpp"
#include "rppgm/util/rng.hpp"

using namespace rppgm;
using namespace rppgm::ad;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(element_count(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v));
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

using Fn = std::function<Tensor(std::span<const Tensor>)>;

// Scalarizes f with a fixed random projection and compares the tape gradient
// against central differences for every input.
void check_against_fd(const Fn& f, std::vector<Tensor> inputs, std::uint64_t seed) {
    Rng rng(seed);
    Tensor probe_out = f(inputs);
    Tensor weights = random_tensor(rng, probe_out.shape());

    auto scalar = [&](std::span<const Tensor> xs) { return dot(f(xs), weights); };

    Tape tape;
    std::vector<Tensor> leaves;
    for (auto& x : inputs) leaves.push_back(tape.variable(x));
    Tensor out = scalar(leaves);
    auto grads = tape.gradient(out, leaves);

    for (std::size_t k = 0; k < inputs.size(); ++k) {
        ParamVector at;
        at.values = inputs[k].data();
        auto objective = [&](const ParamVector& p) {
            std::vector<Tensor> xs = inputs;
            xs[k] = Tensor(inputs[k].shape(), p.values);
            return scalar(xs).item();
        };
        ParamVector fd = finite_difference_grad(objective, at, 1e-5);
        EXPECT_LE(rel_err(grads[k].data(), fd.values), 1e-6) << "input " << k;
    }
}

} // namespace

TEST(ForwardEval, MatmulHandArithmetic) {
    Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
    Tensor b = Tensor::matrix(2, 1, {1, 1});
    Tensor c = matmul(a, b);
    EXPECT_EQ(c.shape(), (Shape{2, 1}));
    EXPECT_EQ(c.data(), (std::vector<double>{3, 7}));
}

TEST(ForwardEval, IdentityAndZeroCases) {
    EXPECT_EQ(ad::tanh(Tensor::scalar(0.0)).item(), 0.0);
    EXPECT_EQ(relu(Tensor::scalar(-1.0)).item(), 0.0);
    EXPECT_EQ(ad::mean(Tensor::vector({1, 2, 3, 4})).item(), 2.5);
}

TEST(ForwardEval, ShapeMismatchNamesPrimitiveAndShapes) {
    try {
        matmul(Tensor::matrix(2, 3, std::vector<double>(6, 1.0)), Tensor::matrix(2, 1, {1, 1}));
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("matmul"), std::string::npos);
        EXPECT_NE(msg.find("[2,3]"), std::string::npos);
        EXPECT_NE(msg.find("[2,1]"), std::string::npos);
    }
    EXPECT_THROW(add(Tensor::vector({1, 2}), Tensor::vector({1, 2, 3})), ShapeError);
}

TEST(ForwardEval, NonFiniteReportsNode) {
    Tape tape;
    Tensor x = tape.variable(Tensor::vector({0.0, 1.0}));
    try {
        ad::log(x);
        FAIL() << "expected NonFiniteError";
    } catch (const NonFiniteError& e) {
        EXPECT_EQ(e.node(), 1u);
        EXPECT_NE(std::string(e.what()).find("node 1"), std::string::npos);
    }
}

TEST(ForwardEval, ConstantsNeedNoTape) {
    Tensor y = ad::exp(Tensor::vector({0.0, 1.0}));
    EXPECT_FALSE(y.on_tape());
    EXPECT_DOUBLE_EQ(y[1], std::exp(1.0));
}

TEST(BackwardGrad, SumOfSquares) {
    Tape tape;
    Tensor x = tape.variable(Tensor::vector({1, 2, 3}));
    Tensor out = sum(square(x));
    auto g = backward_grad(tape, out, std::span(&x, 1));
    EXPECT_EQ(g[0].data(), (std::vector<double>{2, 4, 6}));
}

TEST(BackwardGrad, ConstantOutputGivesZeros) {
    Tape tape;
    Tensor x = tape.variable(Tensor::vector({1, 2}));
    Tensor c = Tensor::scalar(3.0);
    auto g = tape.gradient(c, std::span(&x, 1));
    EXPECT_EQ(g[0].data(), (std::vector<double>{0, 0}));

    Tensor unused = tape.variable(Tensor::matrix(1, 2, {5, 6}));
    Tensor out = sum(x);
    Tensor wrt[] = {x, unused};
    auto g2 = tape.gradient(out, wrt);
    EXPECT_EQ(g2[1].shape(), (Shape{1, 2}));
    EXPECT_EQ(g2[1].data(), (std::vector<double>{0, 0}));
}

TEST(BackwardGrad, Errors) {
    Tape tape;
    Tensor x = tape.variable(Tensor::vector({1, 2}));
    Tensor y = square(x);
    EXPECT_THROW(tape.gradient(y, std::span(&x, 1)), ShapeError);

    Tensor s = sum(y);
    EXPECT_THROW(tape.gradient(s, std::span(&y, 1)), Error); // not a leaf
    Tape other;
    Tensor z = other.variable(Tensor::vector({1, 2}));
    EXPECT_THROW(tape.gradient(s, std::span(&z, 1)), Error);
    EXPECT_THROW(add(x, z), Error);
}

TEST(BackwardGrad, MlpMatchesFiniteDifferences) {
    Rng rng(7);
    Tensor w1 = random_tensor(rng, {5, 3}), b1 = random_tensor(rng, {5});
    Tensor w2 = random_tensor(rng, {1, 5}), b2 = random_tensor(rng, {1});
    Tensor x = random_tensor(rng, {3});
    check_against_fd(
        [](std::span<const Tensor> p) {
            Tensor h = ad::tanh(affine(p[0], p[4], p[1]));
            return affine(p[2], h, p[3]);
        },
        {w1, b1, w2, b2, x}, 11);
}

TEST(BackwardGrad, EveryPrimitiveMatchesFiniteDifferences) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        Tensor a = random_tensor(rng, {2, 3});
        Tensor b = random_tensor(rng, {2, 3});
        Tensor pos = random_tensor(rng, {2, 3}, 0.5, 2.0);
        Tensor m = random_tensor(rng, {3, 2});
        Tensor v3 = random_tensor(rng, {3});
        Tensor v2 = random_tensor(rng, {2});
        Tensor s = random_tensor(rng, {1}, 0.5, 2.0);
        auto one = [&](const Fn& f, std::vector<Tensor> in) { check_against_fd(f, std::move(in), seed * 100); };

        one([](auto p) { return add(p[0], p[1]); }, {a, b});
        one([](auto p) { return sub(p[0], p[1]); }, {a, b});
        one([](auto p) { return mul(p[0], p[1]); }, {a, b});
        one([](auto p) { return mul(p[1], p[0]); }, {a, s});
        one([](auto p) { return div(p[0], p[1]); }, {a, pos});
        one([](auto p) { return div(p[0], p[1]); }, {a, s});
        one([](auto p) { return scale(p[0], -1.7); }, {a});
        one([](auto p) { return neg(p[0]); }, {a});
        one([](auto p) { return matmul(p[0], p[1]); }, {a, m});
        one([](auto p) { return matmul(p[0], p[1]); }, {a, v3});
        one([](auto p) { return matmul(p[0], p[1]); }, {v2, a});
        one([](auto p) { return affine(p[0], p[1], p[2]); }, {a, v3, v2});
        one([](auto p) { return affine(p[0], p[1]); }, {m, random_tensor(rng, {4, 2})});
        one([](auto p) { return ad::tanh(p[0]); }, {a});
        one([](auto p) { return relu(p[0]); }, {a});
        one([](auto p) { return leaky_relu(p[0], 0.2); }, {a});
        one([](auto p) { return ad::exp(p[0]); }, {a});
        one([](auto p) { return ad::log(p[0]); }, {pos});
        one([](auto p) { return square(p[0]); }, {a});
        one([](auto p) { return ad::sin(p[0]); }, {a});
        one([](auto p) { return ad::cos(p[0]); }, {a});
        one([](auto p) { return sum(p[0]); }, {a});
        one([](auto p) { return ad::mean(p[0]); }, {a});
        one([](auto p) { return clamp(p[0], -0.5, 0.5); }, {Tensor::vector({-0.9, -0.2, 0.3, 0.8})});
        one([](auto p) { return concat(p[0], p[1]); }, {v3, v2});
        one([](auto p) { return slice(p[0], 1, 3); }, {v3});
    }
}

TEST(BackwardGrad, ClampBlocksGradientOutsideInterval) {
    Tape tape;
    Tensor x = tape.variable(Tensor::vector({-7.0, 0.0, 9.0}));
    auto g = tape.gradient(sum(clamp(x, -5.0, 2.0)), std::span(&x, 1));
    EXPECT_EQ(g[0].data(), (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(AutodiffProperties, Linearity) {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x0 = random_tensor(rng, {4});
        const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3);
        auto f = [](const Tensor& x) { return sum(ad::tanh(mul(x, x))); };
        auto g = [](const Tensor& x) { return sum(ad::sin(scale(x, 2.0))); };

        Tape t1;
        Tensor x1 = t1.variable(x0);
        auto gf = t1.gradient(f(x1), std::span(&x1, 1))[0];
        Tape t2;
        Tensor x2 = t2.variable(x0);
        auto gg = t2.gradient(g(x2), std::span(&x2, 1))[0];
        Tape t3;
        Tensor x3 = t3.variable(x0);
        auto gc = t3.gradient(add(scale(f(x3), a), scale(g(x3), b)), std::span(&x3, 1))[0];
        for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(gc[i], a * gf[i] + b * gg[i], 1e-12);
    }
}

TEST(AutodiffProperties, DeterministicTapesAndGradients) {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        Tape tape;
        Tensor w = tape.variable(random_tensor(rng, {4, 3}));
        Tensor x = tape.constant(random_tensor(rng, {3}));
        Tensor out = sum(ad::tanh(affine(w, x)));
        auto g = tape.gradient(out, std::span(&w, 1));
        std::vector<double> values;
        for (std::size_t i = 0; i < tape.size(); ++i)
            values.insert(values.end(), tape.node(i).value.begin(), tape.node(i).value.end());
        return std::make_pair(values, g[0].data());
    };
    EXPECT_EQ(run(5), run(5));
}

TEST(AutodiffProperties, TapeIsTopologicalAndReplayable) {
    Rng rng(4);
    Tape tape;
    Tensor w = tape.variable(random_tensor(rng, {3, 3}));
    Tensor x = tape.variable(random_tensor(rng, {3}));
    Tensor h = ad::tanh(affine(w, x));
    Tensor parts[] = {h, slice(x, 0, 2)};
    Tensor out = mean(square(concat(parts)));
    (void)out;
    for (NodeId id = 0; id < tape.size(); ++id)
        for (NodeId in : tape.node(id).inputs) EXPECT_LT(in, id);
    EXPECT_TRUE(tape.replay_matches());
}

TEST(FiniteDifference, QuadraticIsExact) {
    ParamVector at;
    at.values = {3.0};
    auto g = finite_difference_grad([](const ParamVector& p) { return p.values[0] * p.values[0]; }, at, 1e-5);
    EXPECT_NEAR(g.values[0], 6.0, 1e-8);
}

TEST(FiniteDifference, ConstantAndErrors) {
    ParamVector at;
    at.values = {1.0, -2.0};
    auto g = finite_difference_grad([](const ParamVector&) { return 4.0; }, at, 1e-5);
    EXPECT_EQ(g.values, (std::vector<double>{0.0, 0.0}));
    EXPECT_THROW(finite_difference_grad([](const ParamVector&) { return 1.0; }, at, 0.0), Error);
    try {
        finite_difference_grad(
            [](const ParamVector& p) { return p.values[1] > -2.0 ? NAN : 0.0; }, at, 1e-5);
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos);
    }
}

TEST(Jacobian, MatchesAnalyticForm) {
    Tensor w = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    Tensor x = Tensor::vector({0.1, -0.2, 0.3});
    Tensor in[] = {x};
    auto jac = jacobian([&](std::span<const Tensor> p) { return affine(w, p[0]); }, in);
    EXPECT_EQ(jac[0].data(), w.data());
}
