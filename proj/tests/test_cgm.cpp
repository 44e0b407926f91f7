#include "cgx/cgm.hpp"
#include "cgx/checkpoint.hpp"
#include "cgx/sha256.hpp"
#include "test_fixtures.hpp"

#include <doctest.h>

#include <filesystem>

using namespace cgx;

TEST_CASE("expected_embedding is the p-weighted row combination") {
    torch::manual_seed(1);
    auto emb = torch::randn({10, 16});

    SUBCASE("one-hot distribution returns the lookup row exactly") {
        for (int64_t k : {0, 3, 9}) {
            auto p = torch::zeros({10});
            p[k] = 1.0;
            CHECK(torch::equal(expected_embedding(emb, p), emb[k]));
        }
    }
    SUBCASE("uniform mix over two classes is the midpoint") {
        auto p = torch::zeros({10});
        p[2] = 0.5;
        p[7] = 0.5;
        CHECK(torch::allclose(expected_embedding(emb, p), (emb[2] + emb[7]) / 2, 1e-6, 1e-7));
    }
    SUBCASE("linearity in the distribution") {
        auto p = torch::softmax(torch::randn({10}), 0);
        auto q = torch::softmax(torch::randn({10}), 0);
        double alpha = 0.3;
        auto lhs = expected_embedding(emb, alpha * p + (1 - alpha) * q);
        auto rhs = alpha * expected_embedding(emb, p) + (1 - alpha) * expected_embedding(emb, q);
        CHECK(torch::allclose(lhs, rhs, 1e-5, 1e-6));
    }
    SUBCASE("a non-distribution is rejected") {
        auto p = torch::full({10}, 0.2);
        CHECK_THROWS_WITH_AS(expected_embedding(emb, p), doctest::Contains("distribution error"),
                             std::invalid_argument);
        auto neg = torch::zeros({10});
        neg[0] = 1.5;
        neg[1] = -0.5;
        CHECK_THROWS_AS(expected_embedding(emb, neg), std::invalid_argument);
    }
}

TEST_CASE("interpolated_embedding walks the segment between two class embeddings") {
    torch::manual_seed(2);
    auto emb = torch::randn({10, 16});
    CHECK(torch::equal(interpolated_embedding(emb, 4, 9, 0.0), emb[4]));
    CHECK(torch::equal(interpolated_embedding(emb, 4, 9, 1.0), emb[9]));
    CHECK(torch::allclose(interpolated_embedding(emb, 4, 9, 0.5), (emb[4] + emb[9]) / 2, 1e-6,
                          1e-7));
    CHECK_THROWS_WITH_AS(interpolated_embedding(emb, 4, 9, 1.01), doctest::Contains("range error"),
                         std::invalid_argument);
    CHECK_THROWS_AS(interpolated_embedding(emb, 4, 9, -0.2), std::invalid_argument);

    SUBCASE("matches expected_embedding with the two-point distribution") {
        double alpha = 0.37;
        auto p = torch::zeros({10});
        p[9] = float(alpha);
        p[4] = float(1 - alpha);
        CHECK(torch::allclose(interpolated_embedding(emb, 4, 9, alpha), expected_embedding(emb, p),
                              1e-6, 1e-7));
    }
}

TEST_CASE("trained model contracts: shapes, determinism, ranges") {
    const auto& w = testfix::tiny_world();
    auto x = w.held_out.images.narrow(0, 0, 8);
    auto a = w.held_out.attrs.narrow(0, 0, 8);
    auto l = w.held_out.labels.narrow(0, 0, 8);

    auto z = w.vae->encode(x, a, l);
    CHECK(z.sizes() == torch::IntArrayRef({8, w.vae->latent_dim()}));
    CHECK(z.isfinite().all().item<bool>());

    SUBCASE("encode is deterministic") {
        CHECK(torch::equal(z, w.vae->encode(x, a, l)));
    }
    SUBCASE("distinct inputs produce distinct latents") {
        CHECK((z[0] - z[1]).norm().item<double>() > 0);
    }
    SUBCASE("generate produces valid images, label lookup == embedding row") {
        auto img = w.vae->generate(z, a, l);
        CHECK(img.sizes() == torch::IntArrayRef({8, 1, kImageSize, kImageSize}));
        CHECK(img.min().item<double>() >= 0.0);
        CHECK(img.max().item<double>() <= 1.0);
        auto emb_rows = w.vae->embedding_matrix().index_select(0, l);
        CHECK(torch::equal(img, w.vae->generate_from_embedding(z, a, emb_rows)));
    }
    SUBCASE("wrong latent dimension is a shape error") {
        CHECK_THROWS_AS(w.vae->generate(torch::randn({8, w.vae->latent_dim() + 1}), a, l),
                        std::invalid_argument);
    }
    SUBCASE("identity intervention is the model reconstruction") {
        auto rec = w.vae->counterfactual_image(x, a, l, a, l);
        CHECK(torch::equal(rec, w.vae->generate(w.vae->encode(x, a, l), a, l)));
    }
}

TEST_CASE("training improves reconstruction over the untrained model") {
    const auto& w = testfix::tiny_world();
    CgmConfig cfg;
    cfg.epochs = 0;  // untrained reference
    cfg.recon_gate = 0;
    cfg.seed = 9;
    auto untrained = train_vae(w.train, w.held_out, cfg);
    auto x = w.held_out.images;
    auto a = w.held_out.attrs;
    auto l = w.held_out.labels;
    double before = (untrained->counterfactual_image(x, a, l, a, l) - x).abs().mean().item<double>();
    double after = (w.vae->counterfactual_image(x, a, l, a, l) - x).abs().mean().item<double>();
    CHECK(after < before);
}

TEST_CASE("vae training is deterministic under a fixed seed") {
    const auto& w = testfix::tiny_world();
    CgmConfig cfg;
    cfg.epochs = 1;
    cfg.recon_gate = 0;
    cfg.seed = 77;
    CgmDiagnostics d1, d2;
    auto m1 = train_vae(w.train, w.held_out, cfg, &d1);
    auto m2 = train_vae(w.train, w.held_out, cfg, &d2);
    CHECK(d1.epoch_losses.back() == doctest::Approx(d2.epoch_losses.back()).epsilon(1e-9));

    auto tmp = std::filesystem::temp_directory_path();
    m1->save((tmp / "cgx-vae-a.ckpt").string());
    m2->save((tmp / "cgx-vae-b.ckpt").string());
    CHECK(checkpoint_digest((tmp / "cgx-vae-a.ckpt").string()) ==
          checkpoint_digest((tmp / "cgx-vae-b.ckpt").string()));
    std::filesystem::remove(tmp / "cgx-vae-a.ckpt");
    std::filesystem::remove(tmp / "cgx-vae-b.ckpt");
}

TEST_CASE("cgm checkpoints restore identical behavior") {
    const auto& w = testfix::tiny_world();
    auto tmp = (std::filesystem::temp_directory_path() / "cgx-vae-roundtrip.ckpt").string();
    w.vae->save(tmp);
    auto loaded = load_cgm(tmp);
    CHECK(loaded->kind() == CgmKind::Variational);
    auto x = w.held_out.images.narrow(0, 0, 4);
    auto a = w.held_out.attrs.narrow(0, 0, 4);
    auto l = w.held_out.labels.narrow(0, 0, 4);
    CHECK(torch::equal(w.vae->encode(x, a, l), loaded->encode(x, a, l)));
    CHECK(torch::equal(w.vae->counterfactual_image(x, a, l, a, l),
                       loaded->counterfactual_image(x, a, l, a, l)));
    std::filesystem::remove(tmp);
}

TEST_CASE("bigan smoke: deterministic encoder, reconstruction improves") {
    const auto& w = testfix::tiny_world();
    CgmConfig cfg;
    cfg.epochs = 2;
    cfg.recon_gate = 0;
    cfg.seed = 23;
    CgmDiagnostics diag;
    auto bigan = train_bigan(w.train, w.held_out, cfg, &diag);
    CHECK(bigan->kind() == CgmKind::Adversarial);

    auto x = w.held_out.images.narrow(0, 0, 8);
    auto a = w.held_out.attrs.narrow(0, 0, 8);
    auto l = w.held_out.labels.narrow(0, 0, 8);
    // Deterministic encoder: same pair twice -> identical latent.
    CHECK(torch::equal(bigan->encode(x, a, l), bigan->encode(x, a, l)));

    CgmConfig cfg0 = cfg;
    cfg0.epochs = 0;
    auto untrained = train_bigan(w.train, w.held_out, cfg0);
    auto rec = [&](const CgmHandle& m) {
        return (m->counterfactual_image(x, a, l, a, l) - x).abs().mean().item<double>();
    };
    CHECK(rec(bigan) < rec(untrained));
    CHECK(diag.discriminator_accuracy >= 0.0);
}

TEST_CASE("encoder and decoder bodies have five convolutional stages") {
    auto enc = nets::image_encoder_stack(8);
    int convs = 0;
    for (const auto& m : enc->modules(false))
        if (m->as<torch::nn::Conv2d>()) ++convs;
    CHECK(convs == 5);

    nets::DecoderStack dec(32, 8);
    int deconvs = 0;
    for (const auto& m : dec->modules(false))
        if (m->as<torch::nn::ConvTranspose2d>()) ++deconvs;
    CHECK(deconvs == 5);
}
