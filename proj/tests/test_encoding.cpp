#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "attengeo/encoding.hpp"
#include "attengeo/random.hpp"

using namespace attengeo;

TEST(PosEnc, OriginPattern) {
    auto pe = build_posenc<double>(16, 4, 4);
    for (std::size_t c = 0; c < 16; ++c) {
        const double v = pe.table.at3(c, 0, 0);
        if (c % 2 == 0) {
            EXPECT_DOUBLE_EQ(v, 0.0) << "channel " << c; // sin(0)
        } else {
            EXPECT_DOUBLE_EQ(v, 1.0) << "channel " << c; // cos(0)
        }
    }
}

TEST(PosEnc, DirectEvaluation) {
    auto pe = build_posenc<double>(4, 2, 2);
    // channel 0 at (x,y)=(1,0): sin(1 / 10000^0) = sin(1)
    EXPECT_NEAR(pe.table.at3(0, 0, 1), std::sin(1.0), 1e-15);
    EXPECT_NEAR(pe.table.at3(1, 0, 1), std::cos(1.0), 1e-15);
    // channels 2,3 read the y coordinate
    EXPECT_NEAR(pe.table.at3(2, 1, 0), std::sin(1.0), 1e-15);
    EXPECT_NEAR(pe.table.at3(3, 1, 0), std::cos(1.0), 1e-15);
}

TEST(PosEnc, ValuesBounded) {
    auto pe = build_posenc<double>(32, 9, 13);
    for (double v : pe.table.data) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(PosEnc, DistinctPositionsDistinctVectors) {
    const std::size_t d = 64, h = 16, w = 16;
    auto pe = build_posenc<double>(d, h, w);
    const std::size_t n = h * w;
    auto channel_vec_equal = [&](std::size_t p, std::size_t q) {
        for (std::size_t c = 0; c < d; ++c) {
            if (pe.table.data[c * n + p] != pe.table.data[c * n + q]) return false;
        }
        return true;
    };
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = p + 1; q < n; ++q) {
            ASSERT_FALSE(channel_vec_equal(p, q)) << "positions " << p << " and " << q;
        }
    }
}

TEST(PosEnc, RejectsBadDModel) {
    EXPECT_THROW(build_posenc<double>(6, 4, 4), std::invalid_argument);
    EXPECT_THROW(build_posenc<double>(0, 4, 4), std::invalid_argument);
}

TEST(PosEnc, PureAndCached) {
    auto a = build_posenc<double>(8, 5, 7);
    auto b = build_posenc<double>(8, 5, 7);
    EXPECT_EQ(a.table.data, b.table.data);
    const auto& c1 = cached_posenc<double>(8, 5, 7);
    const auto& c2 = cached_posenc<double>(8, 5, 7);
    EXPECT_EQ(&c1, &c2);
    EXPECT_EQ(c1.table.data, a.table.data);
}

TEST(ClickEncoding, PeakAtClick) {
    auto enc = encode_click<double>(3, 5, 8, 8, 3.0);
    EXPECT_DOUBLE_EQ(enc.channel.at3(0, 5, 3), 1.0);
    for (double v : enc.channel.data) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(ClickEncoding, ValueAtSigmaDistance) {
    const double sigma = 2.0;
    auto enc = encode_click<double>(4, 4, 16, 16, sigma);
    EXPECT_NEAR(enc.channel.at3(0, 4, 6), std::exp(-0.5), 1e-12); // dx = sigma
}

TEST(ClickEncoding, MassShrinksTowardOneHot) {
    double prev = 1e300;
    for (double sigma : {3.0, 2.0, 1.0, 0.5, 0.25}) {
        auto enc = encode_click<double>(8, 8, 17, 17, sigma);
        double s = 0;
        for (double v : enc.channel.data) s += v;
        EXPECT_LT(s, prev) << "sigma " << sigma;
        EXPECT_GE(s, 1.0);
        prev = s;
    }
}

TEST(ClickEncoding, RejectsOutOfBounds) {
    EXPECT_THROW(encode_click<double>(8, 3, 8, 8, 3.0), std::invalid_argument);
    EXPECT_THROW(encode_click<double>(-1, 3, 8, 8, 3.0), std::invalid_argument);
    EXPECT_THROW(encode_click<double>(3, 3, 8, 8, 0.0), std::invalid_argument);
}

TEST(AddPosenc, ZeroFeaturesGiveTable) {
    auto pe = build_posenc<double>(8, 3, 4);
    Tensor<double> zeros({8, 3, 4});
    EXPECT_EQ(add_posenc(zeros, pe).data, pe.table.data);
}

TEST(AddPosenc, LinearityAndSpotProbe) {
    Rng rng(12);
    auto pe = build_posenc<double>(8, 3, 4);
    Tensor<double> f = rng.tensor_uniform<double>({8, 3, 4}, -2.0, 2.0);
    Tensor<double> once = add_posenc(f, pe);
    Tensor<double> twice = add_posenc(once, pe);
    for (std::size_t i = 0; i < f.size(); ++i) {
        EXPECT_DOUBLE_EQ(twice.data[i], f.data[i] + 2.0 * pe.table.data[i]);
    }
    EXPECT_DOUBLE_EQ(once.at3(5, 2, 1), f.at3(5, 2, 1) + pe.table.at3(5, 2, 1));

    EXPECT_THROW(add_posenc(Tensor<double>({4, 3, 4}), pe), std::invalid_argument);
}
