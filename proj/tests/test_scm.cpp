#include "cgx/scm.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace cgx;

namespace {

// Synthetic linear-Gaussian table: t ~ N(0, 0.6), i = 2t + e, s ~ N(0, 1).
torch::Tensor linear_gaussian_table(int64_t n, uint64_t seed, double slope = 2.0) {
    auto gen = at::detail::createCPUGenerator(seed);
    auto t = torch::randn({n}, gen, torch::kFloat64) * 0.6;
    auto e = torch::randn({n}, gen, torch::kFloat64);
    auto s = torch::randn({n}, gen, torch::kFloat64);
    return torch::stack({t, slope * t + e, s}, 1);
}

AttributeScm fit_linear(uint64_t seed, int64_t hidden = 0) {
    ScmFitConfig cfg;
    cfg.hidden = hidden;
    cfg.epochs = 1500;
    cfg.lr = 0.05;
    cfg.seed = seed;
    return AttributeScm::fit(linear_gaussian_table(4000, seed), CausalGraph::morpho_mnist(), cfg);
}

}  // namespace

TEST_CASE("causal graph has the fixed Morpho-MNIST structure") {
    auto g = CausalGraph::morpho_mnist();
    CHECK(g.is_acyclic());
    CHECK(g.parents("intensity") == std::vector<std::string>{"thickness"});
    CHECK(g.parents("thickness").empty());
    CHECK(g.parents("slant").empty());
    CHECK(g.parents("image").size() == 4);
    // The image is a sink.
    for (const auto& [from, to] : g.edges) CHECK(from != "image");
    auto order = g.attribute_order();
    auto pos = [&](const std::string& n) {
        return std::find(order.begin(), order.end(), n) - order.begin();
    };
    CHECK(pos("thickness") < pos("intensity"));
}

TEST_CASE("mechanism algebra: i = 2t + noise") {
    // Affine conditioner with hand-set weights: mu(t) = 2t, sigma = 1.
    Mechanism mech("intensity", std::vector<std::string>{"thickness"}, 0);
    {
        torch::NoGradGuard ng;
        for (auto& p : mech->named_parameters()) {
            if (p.key().find("weight") != std::string::npos)
                p.value().copy_(torch::tensor({{2.0}, {0.0}}, torch::kFloat64));
            else
                p.value().zero_();
        }
    }
    auto t = torch::tensor({2.0}, torch::kFloat64).unsqueeze(1);
    auto i = torch::tensor({5.0}, torch::kFloat64);
    // Observed (t=2, i=5) with mu=2t, sigma=1 abducts noise 1.
    auto eps = mech->inverse(t, i);
    CHECK(eps.item<double>() == doctest::Approx(1.0).epsilon(1e-12));
    // Counterfactual do(t=3): i' = 2*3 + 1 = 7.
    auto t_cf = torch::tensor({3.0}, torch::kFloat64).unsqueeze(1);
    CHECK(mech->forward(t_cf, eps).item<double>() == doctest::Approx(7.0).epsilon(1e-12));
    // Forward-inverse consistency.
    CHECK(mech->forward(t, mech->inverse(t, i)).item<double>() == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("fitting recovers the conditional-mean slope within 10% of OLS") {
    auto table = linear_gaussian_table(10000, 1234);
    ScmFitConfig cfg;
    cfg.hidden = 0;
    cfg.epochs = 1500;
    cfg.seed = 5;
    auto scm = AttributeScm::fit(table, CausalGraph::morpho_mnist(), cfg);

    std::vector<double> xs, ys;
    for (int64_t r = 0; r < table.size(0); ++r) {
        xs.push_back(table[r][0].item<double>());
        ys.push_back(table[r][1].item<double>());
    }
    auto ref = testutil::ols(xs, ys);

    // Fitted conditional-mean slope from two probe points.
    auto probe = torch::tensor({{-1.0}, {1.0}}, torch::kFloat64);
    auto [mu, sigma] = scm.mechanism("intensity")->location_scale(probe);
    double fitted_slope = (mu[1].item<double>() - mu[0].item<double>()) / 2.0;
    CHECK(fitted_slope == doctest::Approx(ref.slope).epsilon(0.10));
}

TEST_CASE("abduction and counterfactual prediction") {
    auto scm = fit_linear(7);

    AttributeVector a{0.4, 0.9, -0.3, 4};

    SUBCASE("forward(abduct(a)) = a within 1e-6") {
        auto noise = scm.abduct(a);
        auto back = scm.forward(noise);
        CHECK(back.thickness == doctest::Approx(a.thickness).epsilon(1e-9));
        CHECK(back.intensity == doctest::Approx(a.intensity).epsilon(1e-9));
        CHECK(back.slant == doctest::Approx(a.slant).epsilon(1e-9));
        CHECK(back.label == a.label);
    }

    SUBCASE("abduction of a root depends only on its own value") {
        AttributeVector b = a;
        b.intensity = -0.5;  // different child value
        CHECK(scm.abduct(a).thickness == scm.abduct(b).thickness);
        CHECK(scm.abduct(a).slant == scm.abduct(b).slant);
    }

    SUBCASE("do(slant) changes only slant") {
        InterventionSpec spec;
        spec.slant = 0.75;
        auto cf = scm.counterfactual(a, spec);
        CHECK(cf.slant == 0.75);  // exact, bit for bit
        CHECK(cf.thickness == a.thickness);
        CHECK(cf.intensity == a.intensity);
        CHECK(cf.label == a.label);
    }

    SUBCASE("do(thickness) updates intensity per the abducted noise, closed form") {
        InterventionSpec spec;
        spec.thickness = 0.9;
        auto cf = scm.counterfactual(a, spec);
        CHECK(cf.thickness == 0.9);
        // Closed form from the fitted location-scale mechanism:
        // i' = mu(t*) + sigma(t*) * (i - mu(t)) / sigma(t).
        const auto& mech = scm.mechanism("intensity");
        auto t_fact = torch::tensor({{a.thickness}}, torch::kFloat64);
        auto t_cf = torch::tensor({{0.9}}, torch::kFloat64);
        auto [mu_f, sig_f] = mech->location_scale(t_fact);
        auto [mu_c, sig_c] = mech->location_scale(t_cf);
        double eps = (a.intensity - mu_f[0].item<double>()) / sig_f[0].item<double>();
        double expected = mu_c[0].item<double>() + sig_c[0].item<double>() * eps;
        CHECK(cf.intensity == doctest::Approx(expected).epsilon(1e-9));
        CHECK(std::abs(cf.intensity - expected) < 1e-6);
        CHECK(cf.slant == a.slant);  // no intervened ancestor
    }

    SUBCASE("empty spec returns the input exactly") {
        auto cf = scm.counterfactual(a, InterventionSpec{});
        CHECK(cf.thickness == a.thickness);
        CHECK(cf.intensity == a.intensity);
        CHECK(cf.slant == a.slant);
        CHECK(cf.label == a.label);
    }

    SUBCASE("label intervention sets the label directly") {
        InterventionSpec spec;
        spec.label = 8;
        auto cf = scm.counterfactual(a, spec);
        CHECK(cf.label == 8);
        CHECK(cf.thickness == a.thickness);
    }

    SUBCASE("propagate=false freezes non-intervened attributes") {
        InterventionSpec spec;
        spec.thickness = 0.9;
        auto cf = scm.counterfactual(a, spec, /*propagate=*/false);
        CHECK(cf.intensity == a.intensity);
    }

    SUBCASE("unknown attribute name in a parsed spec is an error") {
        CHECK_THROWS_WITH_AS(InterventionSpec::parse("width=0.5"), doctest::Contains("spec error"),
                             std::invalid_argument);
        auto ok = InterventionSpec::parse("thickness=0.5,label=3");
        CHECK(ok.thickness == 0.5);
        CHECK(ok.label == 3);
    }
}

TEST_CASE("ancestral sampling is deterministic and preserves the t-i dependence sign") {
    auto scm = fit_linear(21);
    auto [a1, l1] = scm.sample(10000, 77);
    auto [a2, l2] = scm.sample(10000, 77);
    CHECK(torch::equal(a1, a2));
    CHECK(torch::equal(l1, l2));
    CHECK_THROWS_AS(scm.sample(0, 1), std::invalid_argument);

    // Training data had slope +2, so sampled correlation must be positive.
    std::vector<double> t, i;
    for (int64_t r = 0; r < a1.size(0); ++r) {
        t.push_back(a1[r][0].item<double>());
        i.push_back(a1[r][1].item<double>());
    }
    CHECK(testutil::pearson(t, i) > 0.5);
}

TEST_CASE("fit reports non-convergence when the loss cannot decrease") {
    ScmFitConfig cfg;
    cfg.lr = 0.0;  // optimizer cannot move
    cfg.epochs = 50;
    cfg.patience = 10;
    CHECK_THROWS_WITH_AS(
        AttributeScm::fit(linear_gaussian_table(500, 3), CausalGraph::morpho_mnist(), cfg),
        doctest::Contains("training error"), std::runtime_error);
}

TEST_CASE("scm checkpoints round-trip") {
    auto scm = fit_linear(31);
    std::string path = (std::filesystem::temp_directory_path() / "cgx-scm-test.ckpt").string();
    scm.save(path);
    auto loaded = AttributeScm::load(path);
    AttributeVector a{0.2, 0.5, -0.1, 2};
    InterventionSpec spec;
    spec.thickness = -0.4;
    auto cf1 = scm.counterfactual(a, spec);
    auto cf2 = loaded.counterfactual(a, spec);
    CHECK(cf1.intensity == doctest::Approx(cf2.intensity).epsilon(1e-12));
    std::filesystem::remove(path);
}

TEST_CASE("out-of-support abduction warns and proceeds") {
    auto scm = fit_linear(41);
    AttributeVector wild{25.0, -30.0, 18.0, 1};  // far outside the fitted range
    auto noise = scm.abduct(wild);  // must not throw
    CHECK(std::isfinite(noise.thickness));
    CHECK(std::isfinite(noise.intensity));
    auto back = scm.forward(noise);
    CHECK(back.intensity == doctest::Approx(wild.intensity).epsilon(1e-9));
}
