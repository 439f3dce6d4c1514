#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "attengeo/config.hpp"
#include "attengeo/random.hpp"
#include "attengeo/tape.hpp"

using namespace attengeo;

namespace {

constexpr double kEps = tol::kGradCheckEps;
constexpr double kTol = tol::kGradCheckOps;

// Random tensors for relu/clamp checks keep every element away from the
// kink so the central difference stays valid.
Tensor<double> away_from(Rng& rng, std::vector<std::size_t> shape, double gap) {
    Tensor<double> t = rng.tensor_uniform<double>(std::move(shape), gap, 1.0);
    for (auto& v : t.data) {
        if (rng.coin()) v = -v;
    }
    return t;
}

} // namespace

TEST(Tape, ReverseReplayAndSharedLeafAccumulation) {
    // y = sum(w*x1) + sum(w*x2): w appears twice, its gradient must be the
    // sum of both contributions after a single backward pass.
    Tape<double> tape;
    Var<double> w = tape.leaf(Tensor<double>({2}, {3.0, -2.0}));
    Var<double> x1 = tape.leaf(Tensor<double>({2}, {1.0, 4.0}));
    Var<double> x2 = tape.leaf(Tensor<double>({2}, {5.0, 6.0}));
    Var<double> y = add(sum(mul(w, x1)), sum(mul(w, x2)));
    tape.backward(y);
    EXPECT_DOUBLE_EQ(tape.grad(w).data[0], 6.0);
    EXPECT_DOUBLE_EQ(tape.grad(w).data[1], 10.0);
    EXPECT_DOUBLE_EQ(tape.grad(x1).data[0], 3.0);

    // Re-running backward starts from clean gradients (no double counting).
    tape.backward(y);
    EXPECT_DOUBLE_EQ(tape.grad(w).data[0], 6.0);
}

TEST(Tape, BackwardRequiresScalarRoot) {
    Tape<double> tape;
    Var<double> x = tape.leaf(Tensor<double>({3}, {1, 2, 3}));
    EXPECT_THROW(tape.backward(x), std::invalid_argument);
    EXPECT_THROW(tape.grad(x), std::runtime_error); // no backward yet
}

TEST(GradCheck, SumHasUnitGradient) {
    Rng rng(1);
    Tensor<double> x = rng.tensor_uniform<double>({3, 4}, -2.0, 2.0);
    double err = grad_check<double>([](Tape<double>& t, Var<double> v) { return sum(v); }, x, kEps);
    EXPECT_LT(err, 1e-9);
}

TEST(GradCheck, SoftmaxSumIsConserved) {
    // sum(softmax(x)) == 1 identically, so the gradient is ~0 everywhere.
    Rng rng(2);
    Tensor<double> x = rng.tensor_uniform<double>({5}, -3.0, 3.0);
    double err =
        grad_check<double>([](Tape<double>& t, Var<double> v) { return sum(softmax(v, 0)); }, x, kEps);
    EXPECT_LT(err, 1e-8);
}

TEST(GradCheck, RejectsNonScalarAndBadEps) {
    Tensor<double> x({2}, {1.0, 2.0});
    auto identity = [](Tape<double>& t, Var<double> v) { return v; };
    EXPECT_THROW(grad_check<double>(identity, x, kEps), std::invalid_argument);
    auto f = [](Tape<double>& t, Var<double> v) { return sum(v); };
    EXPECT_THROW(grad_check<double>(f, x, 1e-8), std::invalid_argument);
    EXPECT_THROW(grad_check<double>(f, x, 1e-2), std::invalid_argument);
}

TEST(GradCheck, MatmulAgainstFiniteDifferences) {
    Rng rng(3);
    Tensor<double> a = rng.tensor_uniform<double>({3, 4}, -1.0, 1.0);
    Tensor<double> b = rng.tensor_uniform<double>({4, 2}, -1.0, 1.0);

    // wrt A
    double err_a = grad_check<double>(
        [&b](Tape<double>& t, Var<double> va) { return sum(matmul(va, t.leaf(b))); }, a, kEps);
    EXPECT_LT(err_a, 1e-6);

    // wrt B
    double err_b = grad_check<double>(
        [&a](Tape<double>& t, Var<double> vb) { return sum(matmul(t.leaf(a), vb)); }, b, kEps);
    EXPECT_LT(err_b, 1e-6);
}

TEST(GradCheck, SoftmaxWeightedLoss) {
    Rng rng(4);
    Tensor<double> x = rng.tensor_uniform<double>({4, 5}, -2.0, 2.0);
    Tensor<double> weights = rng.tensor_uniform<double>({4, 5}, -1.0, 1.0);
    double err = grad_check<double>(
        [&weights](Tape<double>& t, Var<double> v) { return sum(mul(softmax(v, 1), t.leaf(weights))); }, x,
        kEps);
    EXPECT_LT(err, kTol);
}

TEST(GradCheck, Conv2dAllInputs) {
    Rng rng(5);
    Tensor<double> x = rng.tensor_uniform<double>({2, 6, 5}, -1.0, 1.0);
    Tensor<double> w = rng.tensor_uniform<double>({3, 2, 3, 3}, -1.0, 1.0);
    Tensor<double> b = rng.tensor_uniform<double>({3}, -1.0, 1.0);
    Tensor<double> mixer = rng.tensor_uniform<double>({3 * 4 * 3}, -1.0, 1.0);

    auto wrt_x = [&](Tape<double>& t, Var<double> vx) {
        Var<double> y = conv2d(vx, t.leaf(w), t.leaf(b), 1, 0);
        return sum(mul(reshape(y, {y.tape->value(y).size()}), t.leaf(mixer)));
    };
    EXPECT_LT(grad_check<double>(wrt_x, x, kEps), kTol);

    auto wrt_w = [&](Tape<double>& t, Var<double> vw) {
        Var<double> y = conv2d(t.leaf(x), vw, t.leaf(b), 1, 0);
        return sum(mul(reshape(y, {y.tape->value(y).size()}), t.leaf(mixer)));
    };
    EXPECT_LT(grad_check<double>(wrt_w, w, kEps), kTol);

    auto wrt_b = [&](Tape<double>& t, Var<double> vb) {
        Var<double> y = conv2d(t.leaf(x), t.leaf(w), vb, 1, 0);
        return sum(mul(reshape(y, {y.tape->value(y).size()}), t.leaf(mixer)));
    };
    EXPECT_LT(grad_check<double>(wrt_b, b, kEps), kTol);
}

TEST(GradCheck, Conv2dStridedPadded) {
    Rng rng(6);
    Tensor<double> x = rng.tensor_uniform<double>({2, 6, 6}, -1.0, 1.0);
    Tensor<double> w = rng.tensor_uniform<double>({2, 2, 3, 3}, -1.0, 1.0);
    Tensor<double> b = rng.tensor_uniform<double>({2}, -1.0, 1.0);
    auto f = [&](Tape<double>& t, Var<double> vx) {
        Var<double> y = conv2d(vx, t.leaf(w), t.leaf(b), 2, 1);
        return sum(mul(y, y)); // quadratic readout exercises dOut
    };
    EXPECT_LT(grad_check<double>(f, x, kEps), kTol);
}

TEST(GradCheck, Deconv2dAllInputs) {
    Rng rng(7);
    Tensor<double> x = rng.tensor_uniform<double>({3, 4, 4}, -1.0, 1.0);
    Tensor<double> w = rng.tensor_uniform<double>({3, 2, 3, 3}, -1.0, 1.0);
    Tensor<double> b = rng.tensor_uniform<double>({2}, -1.0, 1.0);

    auto wrt_x = [&](Tape<double>& t, Var<double> vx) {
        Var<double> y = deconv2d(vx, t.leaf(w), t.leaf(b), 1, 0);
        return sum(mul(y, y));
    };
    EXPECT_LT(grad_check<double>(wrt_x, x, kEps), kTol);

    auto wrt_w = [&](Tape<double>& t, Var<double> vw) {
        Var<double> y = deconv2d(t.leaf(x), vw, t.leaf(b), 1, 0);
        return sum(mul(y, y));
    };
    EXPECT_LT(grad_check<double>(wrt_w, w, kEps), kTol);

    auto wrt_b = [&](Tape<double>& t, Var<double> vb) {
        Var<double> y = deconv2d(t.leaf(x), t.leaf(w), vb, 1, 0);
        return sum(mul(y, y));
    };
    EXPECT_LT(grad_check<double>(wrt_b, b, kEps), kTol);
}

TEST(GradCheck, ElementwiseChain) {
    Rng rng(8);
    Tensor<double> x = away_from(rng, {4, 4}, 0.05);
    auto f = [](Tape<double>& t, Var<double> v) {
        Var<double> s = sigmoid(affine(relu(v), 2.0, -0.5));
        return mean(mul(s, s));
    };
    EXPECT_LT(grad_check<double>(f, x, kEps), kTol);
}

TEST(GradCheck, LogClampChain) {
    Rng rng(9);
    // Positive inputs strictly inside the clamp interval.
    Tensor<double> x = rng.tensor_uniform<double>({6}, 0.2, 0.8);
    auto f = [](Tape<double>& t, Var<double> v) {
        return sum(log_elem(clamp(v, 1e-7, 1.0 - 1e-7)));
    };
    EXPECT_LT(grad_check<double>(f, x, kEps), kTol);
}

TEST(GradCheck, GatherSliceConcatTranspose) {
    Rng rng(10);
    Tensor<double> x = rng.tensor_uniform<double>({4, 3}, -1.0, 1.0);
    auto f = [](Tape<double>& t, Var<double> v) {
        Var<double> top = slice_rows(v, 0, 2);
        Var<double> bot = slice_rows(v, 2, 4);
        Var<double> re = concat_rows<double>({bot, top});
        Var<double> tr = transpose(re);
        Var<double> g = gather(reshape(tr, {12}), {0, 5, 5, 11});
        return sum(mul(g, g));
    };
    EXPECT_LT(grad_check<double>(f, x, kEps), kTol);
}

TEST(GradCheck, MeanAndAffine) {
    Rng rng(11);
    Tensor<double> x = rng.tensor_uniform<double>({7}, -2.0, 2.0);
    auto f = [](Tape<double>& t, Var<double> v) { return mean(affine(v, -3.0, 1.0)); };
    EXPECT_LT(grad_check<double>(f, x, kEps), 1e-9);
}
