#include "specreg/dct.hpp"
#include "specreg/filters.hpp"
#include "specreg/gradient.hpp"
#include "specreg/similarity.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace specreg;

namespace {

Image2D row(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Image2D(n, 1, std::move(v));
}

WarpResult all_valid(const Image2D& J) { return {J, BinaryMask(J.width(), J.height(), true)}; }

BinaryMask full(const Image2D& I) { return full_mask(I.width(), I.height()); }

Image2D random_image(std::mt19937_64& rng, int w, int h) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    Image2D img(w, h);
    for (auto& v : img.data()) v = U(rng);
    return img;
}

Image2D smooth_random(std::mt19937_64& rng, int w, int h, double sigma) {
    return normalize_minmax(gaussian_blur(random_image(rng, w, h), sigma));
}

oracle::Pair to_pair(const Image2D& I, const Image2D& J) {
    oracle::Pair p{I.width(), I.height(), I.data(), J.data(), std::vector<char>(I.size(), 1)};
    return p;
}

} // namespace

TEST(Ssd, Examples) {
    const Image2D I = row({0, 0}), J = row({3, 4});
    EXPECT_EQ(ssd(I, all_valid(I), full(I)), 0.0);
    EXPECT_DOUBLE_EQ(ssd(I, all_valid(J), full(I)), 12.5);
    BinaryMask first(2, 1);
    first.set(0, 0, true);
    EXPECT_DOUBLE_EQ(ssd(I, all_valid(J), first), 9.0);
    EXPECT_THROW(ssd(I, all_valid(J), BinaryMask(2, 1)), NumericError);
    EXPECT_THROW(ssd(I, all_valid(row({1, 2, 3})), full(I)), InvalidArgument);
}

TEST(Ssd, InvalidPixelsExcluded) {
    const Image2D I = row({0, 0}), J = row({3, 4});
    WarpResult Jw = all_valid(J);
    Jw.valid.set(1, 0, false);
    EXPECT_DOUBLE_EQ(ssd(I, Jw, full(I)), 9.0);
}

TEST(CrossCorrelation, Examples) {
    const Image2D I = row({0.1, 0.5, 0.2, 0.9});
    Image2D J = I;
    for (auto& v : J.data()) v = 2 * v + 3;
    EXPECT_NEAR(cross_correlation(I, all_valid(J), full(I)), 1.0, 1e-12);
    const Image2D a = row({0, 1, 2, 3}), b = row({9, 7, 5, 3});
    EXPECT_NEAR(cross_correlation(a, all_valid(b), full(a)), -1.0, 1e-12);
    const Image2D c = row({1, 2, 3}), d = row({1, 2, 4});
    EXPECT_NEAR(cross_correlation(c, all_valid(d), full(c)), 0.9820, 1e-4);
    EXPECT_THROW(cross_correlation(c, all_valid(row({2, 2, 2})), full(c)), NumericError);
}

TEST(CrossCorrelation, BoundedAndAffineInvariant) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> A(-3, 3);
    for (int k = 0; k < 30; ++k) {
        const Image2D I = random_image(rng, 9, 7), J = random_image(rng, 9, 7);
        const double cc = cross_correlation(I, all_valid(J), full(I));
        EXPECT_LE(std::abs(cc), 1.0 + 1e-12);
        double a = A(rng);
        if (std::abs(a) < 0.1) a = 0.5;
        const double b = A(rng);
        Image2D L = I;
        for (auto& v : L.data()) v = a * v + b;
        EXPECT_NEAR(cross_correlation(I, all_valid(L), full(I)), a > 0 ? 1.0 : -1.0, 1e-12);
    }
}

TEST(CorrelationRatio, Examples) {
    const Image2D I = row({0, 0, 1, 1}), J = row({1, 2, 3, 4});
    EXPECT_NEAR(correlation_ratio(I, all_valid(J), full(I), 2), 0.8, 1e-12);
    const Image2D K = row({5, 5, 7, 7});
    EXPECT_NEAR(correlation_ratio(I, all_valid(K), full(I), 2), 1.0, 1e-12);
    EXPECT_THROW(correlation_ratio(I, all_valid(row({1, 1, 1, 1})), full(I), 2), NumericError);
}

TEST(CorrelationRatio, IndependentNearZero) {
    std::mt19937_64 rng(12);
    const Image2D I = random_image(rng, 100, 100), J = random_image(rng, 100, 100);
    const double eta = correlation_ratio(I, all_valid(J), full(I), 64);
    EXPECT_GE(eta, 0.0);
    EXPECT_LT(eta, 0.05);
}

TEST(CorrelationRatio, Bounded) {
    std::mt19937_64 rng(13);
    for (int k = 0; k < 30; ++k) {
        const Image2D I = random_image(rng, 8, 8), J = random_image(rng, 8, 8);
        const double eta = correlation_ratio(I, all_valid(J), full(I), 4);
        EXPECT_GE(eta, -1e-12);
        EXPECT_LE(eta, 1.0 + 1e-12);
    }
}

TEST(JointHistogram, Examples) {
    const auto h = joint_histogram(row({0, 1}), all_valid(row({0, 1})), full(row({0, 1})), 2);
    EXPECT_EQ(h.counts, (std::vector<double>{1, 0, 0, 1}));
    const Image2D I = row({0, 0, 1, 1});
    const auto g = joint_histogram(I, all_valid(row({0, 1, 0, 1})), full(I), 2);
    EXPECT_EQ(g.counts, (std::vector<double>{1, 1, 1, 1}));
}

TEST(JointHistogram, ConservesCount) {
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> U(0, 1);
    for (int k = 0; k < 10; ++k) {
        const Image2D I = random_image(rng, 13, 11), J = random_image(rng, 13, 11);
        BinaryMask region(13, 11);
        WarpResult Jw = all_valid(J);
        std::size_t n = 0;
        for (std::size_t i = 0; i < I.size(); ++i) {
            region.set(i, U(rng) < 0.7);
            Jw.valid.set(i, U(rng) < 0.8);
            n += region[i] && Jw.valid[i];
        }
        const auto h = joint_histogram(I, Jw, region, 16);
        EXPECT_EQ(h.total(), static_cast<double>(n));
        for (double c : h.counts) EXPECT_GE(c, 0.0);
    }
}

TEST(MutualInformation, Examples) {
    const Image2D I = row({0, 0, 1, 1});
    EXPECT_NEAR(mutual_information(I, all_valid(row({0, 1, 0, 1})), full(I), 2), 0.0, 1e-15);
    EXPECT_NEAR(mutual_information(I, all_valid(I), full(I), 2), std::log(2.0), 1e-15);
}

TEST(MutualInformation, SymmetricNonNegativeSelfIsEntropy) {
    std::mt19937_64 rng(15);
    for (int k = 0; k < 20; ++k) {
        const Image2D I = random_image(rng, 10, 10), J = random_image(rng, 10, 10);
        const double ij = mutual_information(I, all_valid(J), full(I), 8);
        EXPECT_NEAR(ij, mutual_information(J, all_valid(I), full(I), 8), 1e-12);
        EXPECT_GE(ij, -1e-15);
        const auto e = oracle::entropies_over(to_pair(I, I), oracle::used(to_pair(I, I)), 8);
        EXPECT_NEAR(mutual_information(I, all_valid(I), full(I), 8), e.hi, 1e-12);
    }
}

TEST(NormalizedMutualInformation, Examples) {
    const Image2D I = row({0, 0, 1, 1});
    EXPECT_NEAR(normalized_mutual_information(I, all_valid(I), full(I), 2), 2.0, 1e-12);
    EXPECT_NEAR(normalized_mutual_information(I, all_valid(row({0, 1, 0, 1})), full(I), 2), 1.0, 1e-12);
    EXPECT_NEAR(normalized_mutual_information(I, all_valid(row({0, 0, 0, 1})), full(I), 2), 1.2076, 1e-4);
    const Image2D c = row({0.3, 0.3});
    EXPECT_THROW(normalized_mutual_information(c, all_valid(c), full(c), 2), NumericError);
}

TEST(LocalizedMutualInformation, SingleWindowEqualsMi) {
    std::mt19937_64 rng(16);
    const Image2D I = random_image(rng, 16, 16), J = random_image(rng, 16, 16);
    SimilarityConfig cfg;
    cfg.bins = 8;
    cfg.lmi_window = 16;
    cfg.lmi_stride = 16;
    EXPECT_EQ(localized_mutual_information(I, all_valid(J), full(I), cfg), mutual_information(I, all_valid(J), full(I), 8));
}

TEST(LocalizedMutualInformation, SelfIsMeanWindowEntropy) {
    std::mt19937_64 rng(17);
    const Image2D I = random_image(rng, 24, 16);
    SimilarityConfig cfg;
    cfg.bins = 4;
    cfg.lmi_window = 8;
    cfg.lmi_stride = 8;
    const double v = localized_mutual_information(I, all_valid(I), full(I), cfg);
    EXPECT_GT(v, 0.0);
    EXPECT_NEAR(v, oracle::lmi(to_pair(I, I), 4, 8, 8), 1e-12);
}

// Blocks: identical, independent, identical, independent.
TEST(LocalizedMutualInformation, BlockTilingMatchesPerWindowOracle) {
    std::mt19937_64 rng(18);
    const Image2D I = random_image(rng, 32, 32);
    Image2D J = random_image(rng, 32, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            if ((x < 16) == (y < 16)) J.at(x, y) = I.at(x, y);
    SimilarityConfig cfg;
    cfg.bins = 4;
    cfg.lmi_window = 16;
    cfg.lmi_stride = 16;
    const oracle::Pair p = to_pair(I, J);
    double sum = 0;
    for (int by = 0; by < 2; ++by)
        for (int bx = 0; bx < 2; ++bx) {
            std::vector<std::size_t> idx;
            for (int y = 16 * by; y < 16 * by + 16; ++y)
                for (int x = 16 * bx; x < 16 * bx + 16; ++x) idx.push_back(static_cast<std::size_t>(y) * 32 + x);
            sum += oracle::mi_over(p, idx, 4);
        }
    EXPECT_NEAR(localized_mutual_information(I, all_valid(J), full(I), cfg), sum / 4, 1e-12);
}

TEST(LocalizedMutualInformation, FlushWindowAndSparseWindows) {
    std::mt19937_64 rng(19);
    const Image2D I = random_image(rng, 20, 20), J = random_image(rng, 20, 20);
    SimilarityConfig cfg;
    cfg.bins = 4;
    cfg.lmi_window = 8;
    cfg.lmi_stride = 8;
    EXPECT_NEAR(localized_mutual_information(I, all_valid(J), full(I), cfg), oracle::lmi(to_pair(I, J), 4, 8, 8), 1e-12);

    BinaryMask sparse(20, 20);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) sparse.set(x, y, true);
    EXPECT_THROW(localized_mutual_information(I, all_valid(J), sparse, cfg), NumericError);
    cfg.lmi_window = 24;
    EXPECT_THROW(localized_mutual_information(I, all_valid(J), full(I), cfg), InvalidArgument);
}

TEST(Dct, Examples) {
    const auto z = dct2(Image2D(5, 3));
    for (double c : z.coefficients.data()) EXPECT_EQ(c, 0.0);
    const auto s = dct2(Image2D(6, 4, 0.5));
    EXPECT_NEAR(s.coefficients.at(0, 0), 0.5 * std::sqrt(24.0), 1e-12);
    for (std::size_t i = 1; i < s.coefficients.size(); ++i) EXPECT_NEAR(s.coefficients[i], 0.0, 1e-12);

    Image2D basis(8, 6);
    Image2D unit(8, 6);
    unit.at(3, 2) = 1.0;
    basis = idct2({unit});
    const auto b = dct2(basis);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 8; ++x) EXPECT_NEAR(b.coefficients.at(x, y), (x == 3 && y == 2) ? 1.0 : 0.0, 1e-12);
}

TEST(Dct, MatchesDefinitionParsevalAndInverse) {
    std::mt19937_64 rng(20);
    for (auto [w, h] : {std::pair{8, 8}, std::pair{7, 5}, std::pair{1, 9}, std::pair{16, 3}}) {
        const Image2D x = random_image(rng, w, h);
        const auto s = dct2(x);
        const auto ref = oracle::dct2(x.data(), w, h);
        double ex = 0, ec = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            EXPECT_NEAR(s.coefficients[i], ref[i], 1e-12);
            ex += x[i] * x[i];
            ec += s.coefficients[i] * s.coefficients[i];
        }
        EXPECT_LE(std::abs(ec - ex) / ex, 1e-9);
        const Image2D back = idct2(s);
        for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back[i], x[i], 1e-9);
    }
}

TEST(ResidualComplexity, Examples) {
    const Image2D I(4, 4, 1.0), Z(4, 4, 0.0);
    EXPECT_EQ(residual_complexity(I, all_valid(I), full(I), 0.05), 0.0);
    EXPECT_NEAR(residual_complexity(I, all_valid(Z), full(I), 0.05), std::log(321.0), 1e-12);
    // Same energy (16) spread as unit coefficients over all 16 basis images.
    const Image2D spread = idct2({Image2D(4, 4, 1.0)});
    const double uniform = residual_complexity(spread, all_valid(Z), full(I), 0.05);
    EXPECT_NEAR(uniform, 16 * std::log(21.0), 1e-9);
    EXPECT_GT(uniform, std::log(321.0));
}

TEST(ResidualComplexity, OutOfRegionResidualIgnored) {
    std::mt19937_64 rng(21);
    const Image2D I = random_image(rng, 8, 8), J = random_image(rng, 8, 8);
    BinaryMask region(8, 8);
    for (int x = 0; x < 8; ++x) region.set(x, 0, true);
    Image2D J2 = J;
    for (int y = 1; y < 8; ++y)
        for (int x = 0; x < 8; ++x) J2.at(x, y) = 5.0;
    EXPECT_EQ(residual_complexity(I, all_valid(J), region, 0.05), residual_complexity(I, all_valid(J2), region, 0.05));
    EXPECT_GE(residual_complexity(I, all_valid(J), region, 0.05), 0.0);
}

TEST(Evaluate, SignsAndPassthrough) {
    const Image2D I = row({0, 0, 1, 1});
    SimilarityConfig cfg;
    cfg.bins = 2;
    cfg.measure = Measure::MI;
    EXPECT_NEAR(evaluate(cfg, I, all_valid(I), full(I)), -std::log(2.0), 1e-15);
    cfg.measure = Measure::SSD;
    EXPECT_EQ(evaluate(cfg, I, all_valid(I), full(I)), 0.0);
    cfg.measure = Measure::RC;
    const Image2D one(4, 4, 1.0), zero(4, 4);
    EXPECT_NEAR(evaluate(cfg, one, all_valid(zero), full(one)), std::log(321.0), 1e-12);

    std::mt19937_64 rng(22);
    const Image2D A = random_image(rng, 8, 8), B = random_image(rng, 8, 8);
    cfg.bins = 4;
    cfg.lmi_window = 8;
    cfg.lmi_stride = 8;
    const WarpResult Bw = all_valid(B);
    const BinaryMask f = full(A);
    cfg.measure = Measure::CC;
    EXPECT_EQ(evaluate(cfg, A, Bw, f), -cross_correlation(A, Bw, f));
    cfg.measure = Measure::CR;
    EXPECT_EQ(evaluate(cfg, A, Bw, f), -correlation_ratio(A, Bw, f, 4));
    cfg.measure = Measure::NMI;
    EXPECT_EQ(evaluate(cfg, A, Bw, f), -normalized_mutual_information(A, Bw, f, 4));
    cfg.measure = Measure::LMI;
    EXPECT_EQ(evaluate(cfg, A, Bw, f), -localized_mutual_information(A, Bw, f, cfg));
}

TEST(SimilarityConfig, Validation) {
    SimilarityConfig c;
    EXPECT_NO_THROW(validate(c));
    c.bins = 1;
    EXPECT_THROW(validate(c), InvalidArgument);
    c = {};
    c.rc_alpha = 0;
    EXPECT_THROW(validate(c), InvalidArgument);
    c = {};
    c.lmi_window = 7;
    EXPECT_THROW(validate(c), InvalidArgument);
    c = {};
    c.lmi_stride = 0;
    EXPECT_THROW(validate(c), InvalidArgument);
    EXPECT_EQ(parse_measure("NMI"), Measure::NMI);
    EXPECT_EQ(parse_measure("bogus"), std::nullopt);
    for (Measure m : {Measure::SSD, Measure::CC, Measure::CR, Measure::MI, Measure::NMI, Measure::LMI, Measure::RC})
        EXPECT_EQ(parse_measure(to_string(m)), m);
}

TEST(Gradient, StationaryAtExactAlignment) {
    std::mt19937_64 rng(23);
    const Image2D J = smooth_random(rng, 32, 32, 2.0);
    const ControlGrid g = make_control_grid(32, 32, 16);
    SimilarityConfig cfg;
    const auto gr = gradient(cfg, J, J, {}, g, full(J));
    double n2 = 0;
    for (double v : gr) n2 += v * v;
    EXPECT_LE(std::sqrt(n2), 1e-8);
}

TEST(Gradient, SsdLinearInResidual) {
    std::mt19937_64 rng(24);
    const Image2D J = smooth_random(rng, 32, 32, 2.0), N = smooth_random(rng, 32, 32, 2.0);
    Image2D I1(32, 32), I2(32, 32);
    for (std::size_t i = 0; i < J.size(); ++i) {
        I1[i] = J[i] + 0.1 * (N[i] - 0.5);
        I2[i] = J[i] + 0.2 * (N[i] - 0.5);
    }
    const ControlGrid g = make_control_grid(32, 32, 16);
    SimilarityConfig cfg;
    const auto a = gradient(cfg, I1, J, {}, g, full(J)), b = gradient(cfg, I2, J, {}, g, full(J));
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(b[k], 2 * a[k], 1e-12 + 1e-9 * std::abs(a[k]));
}

class GradientVsFiniteDifference : public ::testing::TestWithParam<Measure> {};

TEST_P(GradientVsFiniteDifference, RandomInstance) {
    const Measure m = GetParam();
    const double tol = (m == Measure::SSD || m == Measure::RC) ? 1e-3 : 5e-2;
    std::mt19937_64 rng(25);
    std::uniform_real_distribution<double> D(-1.0, 1.0);
    const Image2D I = smooth_random(rng, 32, 32, 2.0), J = smooth_random(rng, 32, 32, 2.0);
    ControlGrid g = make_control_grid(32, 32, 32);
    ASSERT_EQ(g.nx, 4);
    ASSERT_EQ(g.ny, 4);
    for (auto& d : g.disp) d = {D(rng), D(rng)};
    BinaryMask region(32, 32);
    for (int y = 4; y < 28; ++y)
        for (int x = 4; x < 28; ++x) region.set(x, y, true);
    SimilarityConfig cfg;
    cfg.measure = m;
    cfg.lmi_window = 16;
    cfg.lmi_stride = 16;
    const auto r = gradient_with_value(cfg, I, J, {}, g, region);
    EXPECT_DOUBLE_EQ(r.value, objective(cfg, I, J, {}, g, region));
    double num = 0, den = 0;
    for (std::size_t k = 0; k < g.size(); ++k)
        for (int c = 0; c < 2; ++c) {
            ControlGrid gp = g, gm = g;
            (c ? gp.disp[k].y : gp.disp[k].x) += 0.1;
            (c ? gm.disp[k].y : gm.disp[k].x) -= 0.1;
            const double fd = (objective(cfg, I, J, {}, gp, region) - objective(cfg, I, J, {}, gm, region)) / 0.2;
            num += (r.grad[2 * k + c] - fd) * (r.grad[2 * k + c] - fd);
            den += fd * fd;
        }
    EXPECT_LE(std::sqrt(num / den), tol);
}

INSTANTIATE_TEST_SUITE_P(AllMeasures, GradientVsFiniteDifference,
                         ::testing::Values(Measure::SSD, Measure::CC, Measure::CR, Measure::MI, Measure::NMI,
                                           Measure::LMI, Measure::RC),
                         [](const auto& info) { return std::string(to_string(info.param)); });
