#include <gtest/gtest.h>

#include <cmath>

#include "inpaint/gradcheck.hpp"
#include "inpaint/tensor.hpp"
#include "oracles.hpp"

using inpaint::Tensor;
using T64 = Tensor<double>;

namespace {

inpaint::Rng make_rng(uint64_t seed) { return inpaint::Rng(seed); }

// random values bounded away from zero, for ops with a kink at the origin
T64 random_nonzero(inpaint::Shape shape, inpaint::Rng& rng) {
    auto t = T64::uniform(std::move(shape), -1.0, 1.0, rng);
    auto v = t.values_mut();
    for (auto& x : v)
        if (std::abs(x) < 0.05) x += x >= 0 ? 0.1 : -0.1;
    return t;
}

}  // namespace

TEST(Tensor, ShapeAndDataInvariant) {
    auto t = T64::from({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(t.numel(), 6);
    EXPECT_THROW(T64::from({2, 3}, {1, 2, 3}), inpaint::ShapeError);
}

TEST(Tensor, SigmoidAtZero) {
    auto y = sigmoid(T64::zeros({3}));
    for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Tensor, LeakyReluNegativeSlope) {
    auto y = leaky_relu(T64::from({2}, {-1.0, 2.0}), 0.2);
    EXPECT_DOUBLE_EQ(y.values()[0], -0.2);
    EXPECT_DOUBLE_EQ(y.values()[1], 2.0);
}

TEST(Tensor, SoftmaxUniform) {
    auto y = softmax(T64::zeros({3}), 0);
    for (double v : y.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Tensor, SoftmaxClosedForm) {
    auto y = softmax(T64::from({2}, {std::log(2.0), 0.0}), 0);
    EXPECT_NEAR(y.values()[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(y.values()[1], 1.0 / 3.0, 1e-15);
}

TEST(Tensor, SoftmaxMatchesDirectFormula) {
    auto rng = make_rng(7);
    auto x = T64::uniform({9}, -4.0, 4.0, rng);
    auto y = softmax(x, 0);
    std::vector<double> xs(x.values().begin(), x.values().end());
    auto expect = oracles::softmax(xs);
    for (size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(y.values()[i], expect[i], 1e-12);
}

TEST(Tensor, SoftmaxLanesSumToOne) {
    auto rng = make_rng(8);
    auto x = T64::uniform({3, 5, 4}, -30.0, 30.0, rng);
    for (int64_t axis = 0; axis < 3; ++axis) {
        auto y = softmax(x, axis);
        // sum along the reduced axis must be 1 for every lane
        const auto& s = x.shape();
        int64_t inner = 1, outer = 1;
        for (int64_t i = axis + 1; i < 3; ++i) inner *= s[i];
        for (int64_t i = 0; i < axis; ++i) outer *= s[i];
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t in = 0; in < inner; ++in) {
                double acc = 0;
                for (int64_t e = 0; e < s[axis]; ++e)
                    acc += y.values()[(o * s[axis] + e) * inner + in];
                EXPECT_NEAR(acc, 1.0, 1e-12);
            }
    }
}

TEST(Tensor, BackwardOfSumIsOnes) {
    auto rng = make_rng(3);
    auto x = T64::uniform({2, 3, 2, 2}, -1.0, 1.0, rng);
    x.set_requires_grad(true);
    sum_all(x).backward();
    ASSERT_TRUE(x.has_grad());
    for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Tensor, BackwardOfSigmoidAtZero) {
    auto x = T64::zeros({5});
    x.set_requires_grad(true);
    sum_all(sigmoid(x)).backward();
    for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 0.25);
}

TEST(Tensor, BackwardRequiresScalar) {
    auto x = T64::zeros({2, 2});
    x.set_requires_grad(true);
    EXPECT_THROW(add(x, x).backward(), inpaint::ShapeError);
}

TEST(Tensor, GradPopulatedOnAllReachableLeaves) {
    auto a = T64::full({3}, 2.0);
    auto b = T64::full({3}, 5.0);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    // b enters through a zero-gradient path and must still get a grad buffer
    sum_all(add(a, mul_scalar(b, 0.0))).backward();
    EXPECT_TRUE(a.has_grad());
    EXPECT_TRUE(b.has_grad());
    for (double g : b.grad()) EXPECT_DOUBLE_EQ(g, 0.0);
}

TEST(Tensor, GradCheckSumOfSquares) {
    auto rng = make_rng(11);
    auto x = T64::uniform({4, 3}, -2.0, 2.0, rng);
    x.set_requires_grad(true);
    auto report = inpaint::grad_check<double>([&] { return sum_all(mul(x, x)); }, x, 1e-4, 1e-8);
    EXPECT_TRUE(report.pass);
    EXPECT_LT(report.max_rel_err, 1e-8);
}

TEST(Tensor, GradCheckConstantFunction) {
    auto rng = make_rng(12);
    auto x = T64::uniform({6}, -1.0, 1.0, rng);
    x.set_requires_grad(true);
    auto c = T64::scalar(3.5);
    auto report =
        inpaint::grad_check<double>([&] { return add(mul_scalar(sum_all(x), 0.0), c); }, x, 1e-4, 1e-8);
    EXPECT_TRUE(report.pass);
    EXPECT_DOUBLE_EQ(report.max_rel_err, 0.0);
}

TEST(Tensor, GradCheckDetectsNondeterminism) {
    auto x = T64::ones({2});
    x.set_requires_grad(true);
    int calls = 0;
    auto f = [&]() -> T64 {
        ++calls;
        return mul_scalar(sum_all(x), 1.0 + (calls > 1 ? 1e-9 : 0.0));
    };
    EXPECT_THROW(inpaint::grad_check<double>(f, x, 1e-4, 1e-4), inpaint::NumericError);
}

TEST(Tensor, GradCheckCompositeOfCoreOps) {
    auto rng = make_rng(21);
    auto x = random_nonzero({3, 3, 4, 4}, rng);
    x.set_requires_grad(true);
    auto w = T64::uniform({3, 3}, -1.0, 1.0, rng);
    w.set_requires_grad(true);
    auto bias = T64::uniform({3}, -0.5, 0.5, rng);
    auto s = T64::scalar(0.7);
    s.set_requires_grad(true);

    auto f = [&]() -> T64 {
        auto a = leaky_relu(x, 0.2);
        a = bias_add(a, bias);
        a = sigmoid(a);
        auto pooled = global_avg_pool(a);                      // N,C,1,1
        auto mat = reshape(pooled, {3, 3});                    // N x C
        auto mm = matmul(mat, w);                              // N x C
        auto sm = softmax(mm, 1);
        auto cat = inpaint::concat<double>({sm, transpose2d(sm)}, 0);
        auto scaled = scale_by(abs_t(cat), s);
        return add(mean_all(scaled), mean_all(mul(a, a)));
    };
    for (auto* leaf : {&x, &w, &s}) {
        auto report = inpaint::grad_check<double>(f, *leaf, 1e-4, 1e-4);
        EXPECT_TRUE(report.pass) << "max rel err " << report.max_rel_err << " at component "
                                 << report.worst_index;
    }
}

TEST(Tensor, GradCheckElementwiseSuite) {
    auto rng = make_rng(33);
    auto x = random_nonzero({3, 4}, rng);
    x.set_requires_grad(true);
    auto y = random_nonzero({3, 4}, rng);

    std::vector<std::pair<const char*, std::function<T64()>>> cases = {
        {"add", [&] { return sum_all(add(x, y)); }},
        {"sub", [&] { return sum_all(sub(y, x)); }},
        {"mul", [&] { return sum_all(mul(x, y)); }},
        {"neg", [&] { return sum_all(neg(x)); }},
        {"add_scalar", [&] { return sum_all(add_scalar(x, 1.5)); }},
        {"mul_scalar", [&] { return sum_all(mul_scalar(x, -2.5)); }},
        {"sigmoid", [&] { return sum_all(sigmoid(x)); }},
        {"relu", [&] { return sum_all(relu(x)); }},
        {"leaky", [&] { return sum_all(leaky_relu(x, 0.2)); }},
        {"abs", [&] { return sum_all(abs_t(x)); }},
        {"reciprocal", [&] { return sum_all(reciprocal(add_scalar(abs_t(x), 1.0))); }},
        {"log_clamped", [&] { return sum_all(log_clamped(add_scalar(abs_t(x), 0.5), 1e-8)); }},
        {"sqrt_clamped", [&] { return sum_all(sqrt_clamped(add_scalar(abs_t(x), 0.5), 1e-8)); }},
        {"clamp_min", [&] { return sum_all(clamp_min(x, 0.3)); }},
        {"row_scale", [&] { return sum_all(row_scale(x, sum_axis2d(y, 1))); }},
        {"sum_axis0", [&] { return sum_all(mul(sum_axis2d(x, 0), sum_axis2d(y, 0))); }},
        {"sum_axis1", [&] { return sum_all(mul(sum_axis2d(x, 1), sum_axis2d(y, 1))); }},
        {"mean", [&] { return mean_all(x); }},
        {"l1_norm", [&] { return l1_norm(x); }},
        {"add_broadcast", [&] { return sum_all(add_broadcast(x, mean_all(y), -1.0)); }},
    };
    for (auto& [name, f] : cases) {
        auto report = inpaint::grad_check<double>(f, x, 1e-4, 1e-4);
        EXPECT_TRUE(report.pass) << name << ": max rel err " << report.max_rel_err;
    }
}

TEST(Tensor, GradCheckBroadcastHelpers) {
    auto rng = make_rng(35);
    auto x = T64::uniform({2, 3, 4, 4}, -1.0, 1.0, rng);
    auto sc = T64::uniform({2, 3, 1, 1}, 0.5, 1.5, rng);
    auto mask = T64::uniform({2, 1, 4, 4}, 0.1, 1.0, rng);
    auto bias = T64::uniform({3}, -1.0, 1.0, rng);
    x.set_requires_grad(true);
    sc.set_requires_grad(true);
    mask.set_requires_grad(true);
    bias.set_requires_grad(true);

    auto f = [&]() -> T64 {
        auto a = channel_scale(x, sc);
        a = spatial_scale(a, mask);
        a = bias_add(a, bias);
        return mean_all(mul(a, a));
    };
    for (auto* leaf : {&x, &sc, &mask, &bias}) {
        auto report = inpaint::grad_check<double>(f, *leaf, 1e-4, 1e-4);
        EXPECT_TRUE(report.pass) << "max rel err " << report.max_rel_err;
    }
}

TEST(Tensor, GradCheckSelectAndCrop) {
    auto rng = make_rng(36);
    auto x = T64::uniform({3, 2, 5, 5}, -1.0, 1.0, rng);
    x.set_requires_grad(true);
    auto f = [&]() -> T64 {
        auto item = select_batch(x, 1);
        auto window = crop4(item, 1, 2, 3, 2);
        return sum_all(mul(window, window));
    };
    auto report = inpaint::grad_check<double>(f, x, 1e-4, 1e-4);
    EXPECT_TRUE(report.pass) << report.max_rel_err;
}

TEST(Tensor, GradCheckMeanChw) {
    auto rng = make_rng(37);
    auto x = T64::uniform({2, 3, 3, 3}, -1.0, 1.0, rng);
    x.set_requires_grad(true);
    auto f = [&]() -> T64 {
        auto m = mean_chw(x);
        return sum_all(mul(m, m));
    };
    EXPECT_TRUE(inpaint::grad_check<double>(f, x, 1e-4, 1e-4).pass);
}

TEST(Tensor, DetachBlocksGradient) {
    auto x = T64::full({3}, 2.0);
    x.set_requires_grad(true);
    auto d = x.detach();
    EXPECT_FALSE(d.requires_grad());
    auto loss = sum_all(add(x, d));
    loss.backward();
    for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Tensor, MatmulAgainstHandComputation) {
    auto a = T64::from({2, 3}, {1, 2, 3, 4, 5, 6});
    auto b = T64::from({3, 2}, {7, 8, 9, 10, 11, 12});
    auto c = matmul(a, b);
    EXPECT_DOUBLE_EQ(c.values()[0], 58.0);
    EXPECT_DOUBLE_EQ(c.values()[1], 64.0);
    EXPECT_DOUBLE_EQ(c.values()[2], 139.0);
    EXPECT_DOUBLE_EQ(c.values()[3], 154.0);
}

TEST(Tensor, ConcatRoundsTrips) {
    auto rng = make_rng(40);
    auto a = T64::uniform({2, 2, 2, 2}, -1.0, 1.0, rng);
    auto b = T64::uniform({2, 3, 2, 2}, -1.0, 1.0, rng);
    auto c = inpaint::concat<double>({a, b}, 1);
    ASSERT_EQ(c.dim(1), 5);
    EXPECT_DOUBLE_EQ(c.at4(1, 0, 1, 1), a.at4(1, 0, 1, 1));
    EXPECT_DOUBLE_EQ(c.at4(1, 2, 0, 1), b.at4(1, 0, 0, 1));
    EXPECT_THROW(inpaint::concat<double>({a, T64::zeros({2, 3, 3, 2})}, 1), inpaint::ShapeError);
}
