#include "specreg/evaluate.hpp"
#include "specreg/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <tuple>

using namespace specreg;

namespace {

BinaryMask mask_from(int w, int h, const std::vector<int>& on) {
    BinaryMask m(w, h);
    for (int i : on) m.set(static_cast<std::size_t>(i), true);
    return m;
}

BinaryMask random_mask(std::mt19937_64& rng, int w, int h, double p) {
    std::bernoulli_distribution B(p);
    BinaryMask m(w, h);
    for (std::size_t i = 0; i < m.size(); ++i) m.set(i, B(rng));
    return m;
}

DeformationField random_field(std::mt19937_64& rng, int w, int h) {
    std::normal_distribution<double> N(0, 2);
    DeformationField f(w, h);
    for (auto& d : f.disp) d = {N(rng), N(rng)};
    return f;
}

} // namespace

TEST(Dice, Examples) {
    const BinaryMask a = mask_from(5, 4, {0, 3, 7, 8});
    EXPECT_EQ(dice(a, a), 1.0);
    EXPECT_EQ(dice(a, mask_from(5, 4, {1, 2})), 0.0);
    std::vector<int> p, s;
    for (int i = 0; i < 10; ++i) p.push_back(i);
    for (int i = 4; i < 14; ++i) s.push_back(i);
    EXPECT_DOUBLE_EQ(dice(mask_from(5, 4, p), mask_from(5, 4, s)), 0.6);
    EXPECT_THROW(dice(BinaryMask(5, 4), BinaryMask(5, 4)), InvalidArgument);
    EXPECT_THROW(dice(a, BinaryMask(4, 5)), InvalidArgument);
}

TEST(RelativeOverlap, Examples) {
    const BinaryMask a = mask_from(4, 4, {0, 1, 2, 3, 4});
    EXPECT_EQ(relative_overlap(a, a), 1.0);
    const BinaryMask b = mask_from(4, 4, {2, 3, 4, 5, 6});
    EXPECT_DOUBLE_EQ(relative_overlap(a, b), 3.0 / 7.0);
}

TEST(Overlap, SymmetricBoundedAndRelated) {
    std::mt19937_64 rng(40);
    for (int k = 0; k < 200; ++k) {
        const BinaryMask P = random_mask(rng, 9, 7, 0.4), S = random_mask(rng, 9, 7, 0.5);
        const double d = dice(P, S), ro = relative_overlap(P, S);
        EXPECT_EQ(d, dice(S, P));
        EXPECT_EQ(ro, relative_overlap(S, P));
        EXPECT_GE(ro, 0.0);
        EXPECT_LE(d, 1.0);
        EXPECT_NEAR(d, 2 * ro / (1 + ro), 1e-12);
    }
}

TEST(EdgeOverlay, Colors) {
    const BinaryMask a = mask_from(4, 3, {0, 5, 6});
    auto colors = [](const RgbImage& img) {
        std::set<std::tuple<int, int, int>> s;
        for (const auto& p : img.pixels) s.insert({p.r, p.g, p.b});
        return s;
    };
    const auto same = edge_overlay(a, a);
    EXPECT_EQ(colors(same), (std::set<std::tuple<int, int, int>>{{0, 255, 0}, {255, 255, 255}}));
    const BinaryMask b = mask_from(4, 3, {1, 2});
    EXPECT_EQ(colors(edge_overlay(a, b)),
              (std::set<std::tuple<int, int, int>>{{255, 0, 0}, {0, 0, 255}, {255, 255, 255}}));
    const auto one = edge_overlay(a, mask_from(4, 3, {1, 2, 5}));
    int green = 0;
    for (const auto& p : one.pixels) green += p == kOverlayBoth;
    EXPECT_EQ(green, 1);
    EXPECT_EQ(one.at(1, 1), kOverlayBoth);
    EXPECT_EQ(one.at(0, 0), kOverlayRefOnly);
    EXPECT_EQ(one.at(1, 0), kOverlayRegOnly);
    EXPECT_EQ(one.at(3, 2), kOverlayNeither);
    EXPECT_THROW(edge_overlay(a, BinaryMask(3, 4)), InvalidArgument);
}

TEST(RegionReport, RowsAndTrivialCases) {
    const Image2D ref = make_document(128, 128, 41);
    Image2D before = make_document(128, 128, 42);
    const std::vector<RegionSpec> regions{full_region(128, 128), {"High details", 0, 0, 64, 64},
                                          {"Low details", 64, 64, 64, 64}};
    const auto rep = region_report(ref, before, ref, regions);
    ASSERT_EQ(rep.rows.size(), 3u);
    EXPECT_EQ(rep.rows[0].name, "Full area");
    EXPECT_EQ(rep.rows[1].name, "High details");
    EXPECT_EQ(rep.rows[2].name, "Low details");
    for (const auto& r : rep.rows) {
        EXPECT_EQ(r.dsc_after, 1.0);
        EXPECT_EQ(r.relative_overlap_after, 1.0);
        EXPECT_LT(r.dsc_before, 1.0);
        EXPECT_GE(r.dsc_before, 0.0);
    }
    const auto same = region_report(ref, before, before, regions);
    for (const auto& r : same.rows) EXPECT_EQ(r.dsc_before, r.dsc_after);
    EXPECT_FALSE(rep.field.has_value());
}

TEST(RegionReport, Errors) {
    const Image2D ref = make_document(64, 64, 43);
    EXPECT_THROW(region_report(ref, ref, ref, {{"out", 10, 10, 60, 10}}), InvalidArgument);
    EXPECT_THROW(region_report(ref, ref, ref, {{"empty", 0, 0, 0, 10}}), InvalidArgument);
    EXPECT_THROW(region_report(ref, Image2D(32, 32), ref, {full_region(64, 64)}), InvalidArgument);
    const Image2D flat(64, 64, 0.5);
    EXPECT_THROW(region_report(flat, flat, flat, {full_region(64, 64)}), NumericError);
}

TEST(InteriorRegion, CenteredEightyPercent) {
    const auto r = interior_region(512, 512, 0.8);
    EXPECT_EQ(r.w, 458);
    EXPECT_EQ(r.x, 27);
    EXPECT_NEAR(static_cast<double>(r.w) * r.h / (512.0 * 512.0), 0.8, 0.005);
    EXPECT_EQ(interior_region(10, 20, 1.0).w, 10);
    EXPECT_THROW(interior_region(10, 10, 0.0), InvalidArgument);
    EXPECT_THROW(interior_region(10, 10, 1.5), InvalidArgument);
}

TEST(FieldError, Examples) {
    std::mt19937_64 rng(44);
    const DeformationField t = random_field(rng, 40, 30);
    const auto zero = field_error(t, t, 0.8);
    EXPECT_EQ(zero.mean, 0.0);
    EXPECT_EQ(zero.max, 0.0);
    DeformationField shifted = t;
    for (auto& d : shifted.disp) d.x += 1.0;
    const auto one = field_error(t, shifted, 0.8);
    EXPECT_NEAR(one.mean, 1.0, 1e-12);
    EXPECT_NEAR(one.max, 1.0, 1e-12);
    EXPECT_THROW(field_error(t, DeformationField(30, 40), 0.8), InvalidArgument);
}

TEST(FieldError, MatchesPerPixelReference) {
    std::mt19937_64 rng(45);
    for (int k = 0; k < 10; ++k) {
        const int w = 20 + k * 7, h = 31 - k;
        const DeformationField a = random_field(rng, w, h), b = random_field(rng, w, h);
        const double f = 0.5 + 0.05 * k;
        const int iw = static_cast<int>(std::lround(w * std::sqrt(f))), ih = static_cast<int>(std::lround(h * std::sqrt(f)));
        const int x0 = (w - iw) / 2, y0 = (h - ih) / 2;
        double sum = 0, mx = 0;
        for (int y = y0; y < y0 + ih; ++y)
            for (int x = x0; x < x0 + iw; ++x) {
                const double dx = a.at(x, y).x - b.at(x, y).x, dy = a.at(x, y).y - b.at(x, y).y;
                const double n = std::sqrt(dx * dx + dy * dy);
                sum += n;
                mx = std::max(mx, n);
            }
        const auto e = field_error(a, b, f);
        EXPECT_NEAR(e.mean, sum / (iw * ih), 1e-12);
        EXPECT_NEAR(e.max, mx, 1e-12);
    }
}

TEST(SyntheticValidation, ZeroDeformation) {
    RegistrationConfig cfg;
    cfg.prereg_enabled = false;
    const auto v = synthetic_validation(make_document(128, 128, 46), 46, cfg, {}, 0.0, 32.0);
    ASSERT_TRUE(v.report.field.has_value());
    EXPECT_LE(v.report.field->mean, 0.1);
    ASSERT_EQ(v.report.rows.size(), 1u);
    EXPECT_EQ(v.report.rows[0].name, "Full area");
}

TEST(SyntheticValidation, EightPixelWarpSsd) {
    RegistrationConfig cfg;
    cfg.prereg_enabled = false;
    const auto v = synthetic_validation(make_document(256, 256, 47), 47, cfg, {}, 8.0, 64.0);
    EXPECT_LE(v.report.field->mean, 0.5);
    EXPECT_GT(v.report.rows[0].dsc_after, v.report.rows[0].dsc_before);
}

TEST(SyntheticValidation, Deterministic) {
    RegistrationConfig cfg;
    cfg.similarity.measure = Measure::CC;
    const Image2D img = make_document(96, 96, 48);
    const Distortion d{0.2, 0.02};
    const auto a = synthetic_validation(img, 48, cfg, d, 3.0, 32.0, 2.0, 3.0, -2.0);
    const auto b = synthetic_validation(img, 48, cfg, d, 3.0, 32.0, 2.0, 3.0, -2.0);
    EXPECT_EQ(to_json(a.report).dump(), to_json(b.report).dump());
    EXPECT_EQ(a.pair.moving, b.pair.moving);
    EXPECT_EQ(a.result.registered.image, b.result.registered.image);
}

TEST(ReportJson, Schema) {
    EvaluationReport r;
    r.rows.push_back({"Full area", 0.5, 0.9, 0.8});
    r.field = FieldError{0.25, 1.5};
    const auto j = to_json(r);
    ASSERT_TRUE(j["regions"].is_array());
    const auto& row = j["regions"][0];
    EXPECT_EQ(row["region"], "Full area");
    EXPECT_EQ(row["dsc_before"], 0.5);
    EXPECT_EQ(row["dsc_after"], 0.9);
    EXPECT_EQ(row["relative_overlap"], 0.8);
    EXPECT_EQ(j["field_mean_err_px"], 0.25);
    EXPECT_EQ(j["field_max_err_px"], 1.5);
    EvaluationReport no_field;
    EXPECT_FALSE(to_json(no_field).contains("field_mean_err_px"));
}
