#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "attengeo/random.hpp"
#include "attengeo/tensor.hpp"

using attengeo::Rng;
using attengeo::Tensor;
namespace ops = attengeo::ops;

namespace {

// Maximally naive convolution used as the independent route: materializes
// the zero-padded input and loops over every output element.
Tensor<double> conv2d_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& bias,
                             std::size_t stride, std::size_t pad) {
    const std::size_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2];
    const std::size_t cout = w.shape[0], k = w.shape[2];
    Tensor<double> padded({cin, h + 2 * pad, wd + 2 * pad});
    for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < wd; ++xx) padded.at3(c, y + pad, xx + pad) = x.at3(c, y, xx);

    const std::size_t oh = (h + 2 * pad - k) / stride + 1;
    const std::size_t ow = (wd + 2 * pad - k) / stride + 1;
    Tensor<double> out({cout, oh, ow});
    for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double acc = bias[co];
                for (std::size_t ci = 0; ci < cin; ++ci)
                    for (std::size_t ky = 0; ky < k; ++ky)
                        for (std::size_t kx = 0; kx < k; ++kx)
                            acc += padded.at3(ci, oy * stride + ky, ox * stride + kx) *
                                   w.data[((co * cin + ci) * k + ky) * k + kx];
                out.at3(co, oy, ox) = acc;
            }
    return out;
}

// Explicit dense matrix of the conv2d linear map (bias excluded):
// row = flat output index, column = flat input index.
Tensor<double> conv_matrix(const Tensor<double>& w, std::size_t cin, std::size_t h, std::size_t wd) {
    const std::size_t cout = w.shape[0], k = w.shape[2];
    const std::size_t oh = h - k + 1, ow = wd - k + 1;
    Tensor<double> m({cout * oh * ow, cin * h * wd});
    for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const std::size_t row = (co * oh + oy) * ow + ox;
                for (std::size_t ci = 0; ci < cin; ++ci)
                    for (std::size_t ky = 0; ky < k; ++ky)
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const std::size_t col = (ci * h + oy + ky) * wd + ox + kx;
                            m.at2(row, col) = w.data[((co * cin + ci) * k + ky) * k + kx];
                        }
            }
    return m;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
    EXPECT_EQ(a.shape, b.shape);
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

} // namespace

TEST(TensorBasics, ShapeDataInvariant) {
    Tensor<double> t({2, 3});
    EXPECT_EQ(t.size(), 6u);
    EXPECT_THROW(Tensor<double>({2, 3}, {1.0, 2.0}), std::invalid_argument);
    EXPECT_THROW(Tensor<double>({0, 3}), std::invalid_argument);
    EXPECT_THROW(Tensor<double>(std::vector<std::size_t>{}), std::invalid_argument);
}

TEST(Matmul, IdentityCase) {
    Tensor<double> eye({2, 2}, {1, 0, 0, 1});
    Tensor<double> m({2, 2}, {3, -1, 2, 5});
    EXPECT_EQ(ops::matmul(eye, m).data, m.data);
}

TEST(Matmul, HandComputedProduct) {
    Tensor<double> a({2, 2}, {1, 2, 3, 4});
    Tensor<double> b({2, 1}, {0, 1});
    Tensor<double> c = ops::matmul(a, b);
    EXPECT_EQ(c.shape, (std::vector<std::size_t>{2, 1}));
    EXPECT_DOUBLE_EQ(c.data[0], 2.0);
    EXPECT_DOUBLE_EQ(c.data[1], 4.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    Tensor<double> a({2, 3});
    Tensor<double> b({4, 5});
    try {
        ops::matmul(a, b);
        FAIL() << "expected throw";
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2 x 3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[4 x 5]"), std::string::npos) << msg;
    }
}

TEST(Softmax, SymmetricPair) {
    Tensor<double> x({2}, {0, 0});
    Tensor<double> y = ops::softmax(x, 0);
    EXPECT_DOUBLE_EQ(y.data[0], 0.5);
    EXPECT_DOUBLE_EQ(y.data[1], 0.5);
}

TEST(Softmax, DirectEvaluation) {
    Tensor<double> x({2}, {0.0, std::log(3.0)});
    Tensor<double> y = ops::softmax(x, 0);
    EXPECT_NEAR(y.data[0], 0.25, 1e-15);
    EXPECT_NEAR(y.data[1], 0.75, 1e-15);
}

TEST(Softmax, LargeInputsNoOverflow) {
    Tensor<double> x({2}, {1000.0, 1000.0});
    Tensor<double> y = ops::softmax(x, 0);
    EXPECT_DOUBLE_EQ(y.data[0], 0.5);
    EXPECT_DOUBLE_EQ(y.data[1], 0.5);
    EXPECT_TRUE(y.all_finite());
}

TEST(Softmax, RowsSumToOne) {
    Rng rng(7);
    Tensor<double> x = rng.tensor_uniform<double>({5, 9}, -30.0, 30.0);
    Tensor<double> y = ops::softmax(x, 1);
    for (std::size_t i = 0; i < 5; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 9; ++j) {
            s += y.at2(i, j);
            EXPECT_GT(y.at2(i, j), 0.0);
            EXPECT_LT(y.at2(i, j), 1.0);
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Softmax, AxisZeroOfMatrix) {
    Rng rng(8);
    Tensor<double> x = rng.tensor_uniform<double>({4, 3}, -5.0, 5.0);
    Tensor<double> y = ops::softmax(x, 0);
    for (std::size_t j = 0; j < 3; ++j) {
        double s = 0;
        for (std::size_t i = 0; i < 4; ++i) s += y.at2(i, j);
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
    EXPECT_THROW(ops::softmax(x, 2), std::invalid_argument);
}

TEST(Conv2d, OutputShapeArithmetic) {
    Tensor<double> x({1, 8, 8});
    Tensor<double> w({1, 1, 3, 3});
    Tensor<double> b({1});
    Tensor<double> y = ops::conv2d(x, w, b);
    EXPECT_EQ(y.shape, (std::vector<std::size_t>{1, 6, 6}));
}

TEST(Conv2d, OneByOneIdentityKernel) {
    Rng rng(3);
    Tensor<double> x = rng.tensor_uniform<double>({2, 4, 5}, -1.0, 1.0);
    Tensor<double> w({2, 2, 1, 1}, {1, 0, 0, 1}); // per-channel passthrough
    Tensor<double> b({2});
    Tensor<double> y = ops::conv2d(x, w, b);
    EXPECT_EQ(y.shape, x.shape);
    EXPECT_LT(max_abs_diff(y, x), 1e-15);
}

TEST(Conv2d, MatchesNaiveOracleOnSmallShapes) {
    Rng rng(11);
    for (std::size_t cin : {1u, 3u}) {
        for (std::size_t cout : {1u, 5u}) {
            for (std::size_t k : {1u, 3u, 5u}) {
                for (std::size_t stride : {1u, 2u}) {
                    for (std::size_t pad : {0u, 1u}) {
                        if (8 + 2 * pad < k) continue;
                        Tensor<double> x = rng.tensor_uniform<double>({cin, 8, 8}, -2.0, 2.0);
                        Tensor<double> w = rng.tensor_uniform<double>({cout, cin, k, k}, -1.0, 1.0);
                        Tensor<double> b = rng.tensor_uniform<double>({cout}, -1.0, 1.0);
                        Tensor<double> fast = ops::conv2d(x, w, b, stride, pad);
                        Tensor<double> slow = conv2d_oracle(x, w, b, stride, pad);
                        EXPECT_LT(max_abs_diff(fast, slow), 1e-12)
                            << "cin=" << cin << " cout=" << cout << " k=" << k << " s=" << stride
                            << " p=" << pad;
                    }
                }
            }
        }
    }
}

TEST(Conv2d, KernelLargerThanInputThrows) {
    Tensor<double> x({1, 2, 2});
    Tensor<double> w({1, 1, 3, 3});
    Tensor<double> b({1});
    EXPECT_THROW(ops::conv2d(x, w, b), std::invalid_argument);
}

TEST(Deconv2d, OutputShapeArithmetic) {
    Tensor<double> x({1, 6, 6});
    Tensor<double> w({1, 1, 3, 3});
    Tensor<double> b({1});
    EXPECT_EQ(ops::deconv2d(x, w, b).shape, (std::vector<std::size_t>{1, 8, 8}));

    Tensor<double> w1({1, 1, 1, 1}, {2.0});
    EXPECT_EQ(ops::deconv2d(x, w1, b).shape, x.shape);
}

TEST(Deconv2d, IsTransposeOfConvMatrix) {
    Rng rng(21);
    const std::size_t cin = 2, h = 5, wd = 6, cout = 3, k = 3;
    Tensor<double> w = rng.tensor_uniform<double>({cout, cin, k, k}, -1.0, 1.0);
    Tensor<double> m = conv_matrix(w, cin, h, wd);

    // z lives in conv output space; deconv2d(z, w) must equal M^T z.
    Tensor<double> z = rng.tensor_uniform<double>({cout, h - k + 1, wd - k + 1}, -1.0, 1.0);
    Tensor<double> zcol({z.size(), 1}, z.data);
    Tensor<double> expect = ops::matmul(ops::transpose(m), zcol);

    Tensor<double> zero_bias({cin});
    Tensor<double> got = ops::deconv2d(z, w, zero_bias);
    ASSERT_EQ(got.size(), expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data[i], expect.data[i], 1e-12);
}

TEST(Deconv2d, RestoresConvSpatialDims) {
    Rng rng(4);
    for (std::size_t k : {1u, 3u, 5u}) {
        Tensor<double> x = rng.tensor_uniform<double>({2, 8, 8}, -1.0, 1.0);
        Tensor<double> wc = rng.tensor_uniform<double>({3, 2, k, k}, -1.0, 1.0);
        Tensor<double> bc({3});
        Tensor<double> mid = ops::conv2d(x, wc, bc);
        Tensor<double> wd = rng.tensor_uniform<double>({3, 2, k, k}, -1.0, 1.0);
        Tensor<double> bd({2});
        Tensor<double> back = ops::deconv2d(mid, wd, bd);
        EXPECT_EQ(back.shape[1], x.shape[1]) << "k=" << k;
        EXPECT_EQ(back.shape[2], x.shape[2]) << "k=" << k;
    }
}

TEST(Elementwise, ReluSigmoidValues) {
    Tensor<double> x({3}, {-1.0, 0.0, 2.0});
    Tensor<double> r = ops::relu(x);
    EXPECT_DOUBLE_EQ(r.data[0], 0.0);
    EXPECT_DOUBLE_EQ(r.data[2], 2.0);

    EXPECT_DOUBLE_EQ(ops::sigmoid(Tensor<double>::scalar(0.0)).data[0], 0.5);

    // Strictly open interval at any magnitude f64 can resolve.
    Tensor<double> big({2}, {30.0, -30.0});
    Tensor<double> s = ops::sigmoid(big);
    EXPECT_LT(s.data[0], 1.0);
    EXPECT_GT(s.data[0], 0.999);
    EXPECT_GT(s.data[1], 0.0);
    EXPECT_LT(s.data[1], 1e-12);
    EXPECT_TRUE(ops::sigmoid(Tensor<double>({2}, {900.0, -900.0})).all_finite());
}

TEST(Elementwise, MulByOnesIsIdentity) {
    Rng rng(5);
    Tensor<double> a = rng.tensor_uniform<double>({3, 4}, -2.0, 2.0);
    Tensor<double> ones = Tensor<double>::ones({3, 4});
    EXPECT_EQ(ops::mul(a, ones).data, a.data);
    EXPECT_THROW(ops::mul(a, Tensor<double>({4, 3})), std::invalid_argument);
    EXPECT_THROW(ops::add(a, Tensor<double>({2, 4})), std::invalid_argument);
}

TEST(Elementwise, MeanClampGather) {
    Tensor<double> x({4}, {1.0, 2.0, 3.0, 6.0});
    EXPECT_DOUBLE_EQ(ops::mean(x).data[0], 3.0);
    EXPECT_DOUBLE_EQ(ops::sum(x).data[0], 12.0);

    Tensor<double> c = ops::clamp(x, 2.0, 3.5);
    EXPECT_DOUBLE_EQ(c.data[0], 2.0);
    EXPECT_DOUBLE_EQ(c.data[3], 3.5);

    Tensor<double> g = ops::gather(x, {3, 0});
    EXPECT_DOUBLE_EQ(g.data[0], 6.0);
    EXPECT_DOUBLE_EQ(g.data[1], 1.0);
    EXPECT_THROW(ops::gather(x, {9}), std::invalid_argument);
}

TEST(Elementwise, SliceConcatTransposeRoundTrip) {
    Rng rng(6);
    Tensor<double> x = rng.tensor_uniform<double>({6, 3}, -1.0, 1.0);
    Tensor<double> top = ops::slice_rows(x, 0, 2);
    Tensor<double> midr = ops::slice_rows(x, 2, 4);
    Tensor<double> bot = ops::slice_rows(x, 4, 6);
    Tensor<double> re = ops::concat_rows<double>({top, midr, bot});
    EXPECT_EQ(re.data, x.data);

    Tensor<double> tt = ops::transpose(ops::transpose(x));
    EXPECT_EQ(tt.data, x.data);
}

TEST(Primitives, FiniteOnFiniteInputs) {
    Rng rng(9);
    Tensor<double> x = rng.tensor_uniform<double>({3, 6, 6}, -50.0, 50.0);
    Tensor<double> w = rng.tensor_uniform<double>({4, 3, 3, 3}, -5.0, 5.0);
    Tensor<double> b = rng.tensor_uniform<double>({4}, -5.0, 5.0);
    EXPECT_TRUE(ops::conv2d(x, w, b).all_finite());
    EXPECT_TRUE(ops::softmax(rng.tensor_uniform<double>({4, 4}, -500.0, 500.0), 1).all_finite());
    EXPECT_TRUE(ops::sigmoid(rng.tensor_uniform<double>({16}, -700.0, 700.0)).all_finite());
}
