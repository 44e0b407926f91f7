#include "cgx/metrics.hpp"
#include "cgx/synth.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace cgx;

TEST_CASE("im1 is the squared-error ratio between target and source reconstructions") {
    auto x = torch::zeros({4});
    // Squared distances: ||x - rec_q||^2 = 0.5, ||x - rec_p||^2 = 2.0.
    auto rec_q = torch::tensor({std::sqrt(0.5f), 0.f, 0.f, 0.f});
    auto rec_p = torch::tensor({std::sqrt(2.0f), 0.f, 0.f, 0.f});
    double eps = 1e-8;
    double dq = (x - rec_q).to(torch::kFloat64).pow(2).sum().item<double>();
    double dp = (x - rec_p).to(torch::kFloat64).pow(2).sum().item<double>();
    CHECK(im1(x, rec_p, rec_q, eps) == doctest::Approx(dq / (dp + eps)).epsilon(1e-12));
    CHECK(im1(x, rec_p, rec_q, eps) == doctest::Approx(0.25).epsilon(1e-6));

    SUBCASE("perfect target reconstruction gives zero") {
        CHECK(im1(x, rec_p, x, eps) == 0.0);
    }
    SUBCASE("identical numerator and denominator errors give ~1") {
        CHECK(im1(x, rec_q, rec_q, eps) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("im2 normalizes the autoencoder disagreement by the L1 mass") {
    SUBCASE("agreement gives zero") {
        auto x = torch::rand({1, 28, 28});
        auto rec = torch::rand({1, 28, 28});
        CHECK(im2(x, rec, rec) == 0.0);
    }
    SUBCASE("direct arithmetic: 0.3 / 60 = 0.005") {
        // ||rec_q - rec_global||^2 = 0.3 and ||x||_1 = 60.
        auto x = torch::full({60}, 1.0f);
        auto rec_q = torch::zeros({60});
        auto rec_g = torch::zeros({60});
        rec_g[0] = std::sqrt(0.3f);
        double num = (rec_q - rec_g).to(torch::kFloat64).pow(2).sum().item<double>();
        CHECK(im2(x, rec_q, rec_g, 1e-8) == doctest::Approx(num / (60.0 + 1e-8)).epsilon(1e-12));
        CHECK(im2(x, rec_q, rec_g, 1e-8) == doctest::Approx(0.005).epsilon(1e-6));
    }
    SUBCASE("all-black counterfactual: denominator is just epsilon, result finite") {
        auto x = torch::zeros({4});
        auto rec_q = torch::tensor({0.1f, 0.f, 0.f, 0.f});
        auto rec_g = torch::zeros({4});
        double v = im2(x, rec_q, rec_g, 1e-8);
        CHECK(std::isfinite(v));
        CHECK(v > 0);
    }
}

TEST_CASE("oracle_score counts argmax agreement") {
    std::vector<int64_t> f = {1, 2, 3, 4, 5, 6, 7, 8, 9, 0};
    CHECK(oracle_score(f, f) == 1.0);

    std::vector<int64_t> o = f;
    for (size_t i = 0; i < 5; ++i) o[i] = (o[i] + 1) % 10;
    CHECK(oracle_score(f, o) == 0.5);

    CHECK_THROWS_AS(oracle_score({}, {}), std::invalid_argument);
}

TEST_CASE("mean_ci matches the normal-approximation formula") {
    SUBCASE("normal quantiles match reference values to 1e-9") {
        CHECK(normal_quantile_two_sided(0.90) == doctest::Approx(1.6448536269514722).epsilon(1e-12));
        CHECK(normal_quantile_two_sided(0.95) == doctest::Approx(1.959963984540054).epsilon(1e-12));
        CHECK(normal_quantile_two_sided(0.99) == doctest::Approx(2.5758293035489004).epsilon(1e-12));
    }
    SUBCASE("constant sequence has zero half-width") {
        auto ci = mean_ci({0.7, 0.7, 0.7, 0.7}, 0.95);
        CHECK(ci.mean == doctest::Approx(0.7));
        CHECK(ci.half_width == 0.0);
    }
    SUBCASE("{0,2} at 95%: mean 1, half-width z * s/sqrt(n) = z") {
        auto ci = mean_ci({0.0, 2.0}, 0.95);
        CHECK(ci.mean == doctest::Approx(1.0).epsilon(1e-12));
        // s = sqrt(2), n = 2 -> half-width = z exactly.
        CHECK(ci.half_width == doctest::Approx(1.959963984540054).epsilon(1e-9));
    }
    SUBCASE("half-width shrinks as 1/sqrt(n) under duplication") {
        std::vector<double> base = {0.1, 0.9, 0.4, 0.6};
        auto dup = [&](int k) {
            std::vector<double> v;
            for (int i = 0; i < k; ++i) v.insert(v.end(), base.begin(), base.end());
            return mean_ci(v, 0.95).half_width;
        };
        // With many copies the sample s stabilizes, so the ratio approaches 2.
        CHECK(dup(16) / dup(64) == doctest::Approx(2.0).epsilon(0.02));
        CHECK(dup(4) > dup(16));
    }
    SUBCASE("fewer than two values is an error") {
        CHECK_THROWS_AS(mean_ci({1.0}, 0.95), std::invalid_argument);
    }
}

TEST_CASE("spearman rank correlation") {
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {9, 3, 2, 1}) == doctest::Approx(-1.0));
    // Monotone transform leaves it at 1.
    CHECK(spearman({1, 2, 3, 4}, {1, 8, 27, 64}) == doctest::Approx(1.0));
}

TEST_CASE("morphometrics measures what the renderer drew") {
    SUBCASE("all-black image is measurement-undefined") {
        CHECK(!morphometrics(torch::zeros({1, 28, 28})).has_value());
    }

    SUBCASE("intensity is the median brightness of the support") {
        for (double level : {120.0, 200.0, 250.0}) {
            auto img = synth::render_glyph(0, 2.5, level, 0.0, 7);
            auto m = morphometrics(img);
            REQUIRE(m.has_value());
            CHECK(m->intensity == doctest::Approx(level).epsilon(0.04));
        }
    }

    SUBCASE("known synthetic shear is recovered within 0.05 rad") {
        auto base = synth::render_glyph(1, 2.5, 220.0, 0.0, 3);
        double base_slant = morphometrics(base)->slant;
        for (double angle : {-0.3, -0.15, 0.15, 0.3}) {
            auto sheared = testutil::shear_image(base, angle);
            auto m = morphometrics(sheared);
            REQUIRE(m.has_value());
            CHECK(std::abs((m->slant - base_slant) - angle) < 0.05);
        }
    }

    SUBCASE("dilation increases measured thickness") {
        auto img = synth::render_glyph(3, 1.8, 230.0, 0.1, 11);
        auto m0 = morphometrics(img);
        auto m1 = morphometrics(testutil::dilate(img));
        REQUIRE(m0.has_value());
        REQUIRE(m1.has_value());
        CHECK(m1->thickness > m0->thickness);
    }

    SUBCASE("rendered thickness ordering is monotone") {
        double prev = 0;
        for (double t : {1.2, 2.0, 3.0, 3.8}) {
            auto m = morphometrics(synth::render_glyph(0, t, 220.0, 0.0, 5));
            REQUIRE(m.has_value());
            CHECK(m->thickness > prev);
            prev = m->thickness;
        }
    }
}

TEST_CASE("oracle_score is permutation-invariant and bounded") {
    std::vector<int64_t> f = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<int64_t> o = {0, 1, 2, 0, 0, 5, 6, 0, 8, 9};
    double s = oracle_score(f, o);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    // Shuffle the paired observations; agreement counting cannot change.
    std::vector<size_t> perm = {9, 3, 5, 1, 0, 7, 8, 2, 6, 4};
    std::vector<int64_t> fp, op;
    for (size_t i : perm) {
        fp.push_back(f[i]);
        op.push_back(o[i]);
    }
    CHECK(oracle_score(fp, op) == s);
}
