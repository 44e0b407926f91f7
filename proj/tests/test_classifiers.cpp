#include "cgx/classifiers.hpp"
#include "cgx/checkpoint.hpp"
#include "test_fixtures.hpp"

#include <doctest.h>

#include <filesystem>

using namespace cgx;

TEST_CASE("predict_class is argmax with ties broken toward the lowest index") {
    auto scores = torch::tensor({0.1f, 0.9f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f});
    CHECK(predict_class(scores) == 1);

    auto tied = torch::zeros({10});
    tied[2] = 0.4f;
    tied[7] = 0.4f;
    tied[0] = 0.2f;
    CHECK(predict_class(tied) == 2);

    SUBCASE("invariant under strictly increasing transforms") {
        torch::manual_seed(3);
        for (int trial = 0; trial < 50; ++trial) {
            auto s = torch::rand({10});
            CHECK(predict_class(s) == predict_class(s * 3.0 + 1.0));
            CHECK(predict_class(s) == predict_class(s.exp()));
        }
    }
}

TEST_CASE("classifier scores are a probability vector on arbitrary inputs") {
    const auto& w = testfix::tiny_world();
    torch::manual_seed(4);
    auto wild = torch::rand({16, 1, kImageSize, kImageSize});
    auto scores = w.classifier.scores(wild);
    CHECK((scores >= 0).all().item<bool>());
    auto sums = scores.sum(1);
    CHECK(((sums - 1.0).abs() < 1e-6).all().item<bool>());
}

TEST_CASE("classifier training is seed-deterministic and gate-checked") {
    const auto& w = testfix::tiny_world();
    ClassifierConfig cfg;
    cfg.epochs = 1;
    cfg.accuracy_gate = 0;
    auto c1 = train_classifier(w.train, w.held_out, 123, cfg);
    auto c2 = train_classifier(w.train, w.held_out, 123, cfg);
    CHECK(c1.held_out_accuracy() == doctest::Approx(c2.held_out_accuracy()).epsilon(1e-9));

    auto tmp = std::filesystem::temp_directory_path();
    c1.save((tmp / "cgx-clf-a.ckpt").string());
    c2.save((tmp / "cgx-clf-b.ckpt").string());
    CHECK(checkpoint_digest((tmp / "cgx-clf-a.ckpt").string()) ==
          checkpoint_digest((tmp / "cgx-clf-b.ckpt").string()));
    std::filesystem::remove(tmp / "cgx-clf-a.ckpt");
    std::filesystem::remove(tmp / "cgx-clf-b.ckpt");

    SUBCASE("an unreachable accuracy gate raises a training error") {
        ClassifierConfig strict = cfg;
        strict.epochs = 0;
        strict.accuracy_gate = 0.99;
        CHECK_THROWS_WITH_AS(train_classifier(w.train, w.held_out, 1, strict),
                             doctest::Contains("training error"), std::runtime_error);
    }
}

TEST_CASE("oracles use consecutive seeds and the explained architecture") {
    const auto& w = testfix::tiny_world();
    ClassifierConfig cfg;
    cfg.epochs = 1;
    cfg.accuracy_gate = 0;
    auto set = train_oracles(w.train, w.held_out, 2, 900, cfg);
    REQUIRE(set.oracles.size() == 2);
    CHECK(set.oracles[0].seed() == 900);
    CHECK(set.oracles[1].seed() == 901);
    CHECK(set.oracles[0].architecture() == set.oracles[1].architecture());
    CHECK_THROWS_AS(train_oracles(w.train, w.held_out, 0, 1, cfg), std::invalid_argument);

    SUBCASE("n=1 reduces the oracle score to single-model agreement") {
        auto single = train_oracles(w.train, w.held_out, 1, 900, cfg);
        CHECK(single.oracles.size() == 1);
    }
}

TEST_CASE("class autoencoders: per-class models plus a global one") {
    const auto& w = testfix::tiny_world();
    AutoencoderConfig cfg;
    cfg.epochs = 2;
    cfg.recon_gate = 0;  // tiny budget
    auto aes = train_autoencoders(w.train, w.held_out, cfg);

    auto x = w.held_out.images.narrow(0, 0, 4);
    for (int64_t k : {0, 5, 9}) {
        auto rec = aes.reconstruct(k, x);
        CHECK(rec.sizes() == x.sizes());
        CHECK(rec.min().item<double>() >= 0.0);
    }
    CHECK(aes.reconstruct_global(x).sizes() == x.sizes());
    CHECK_THROWS_AS(aes.reconstruct(10, x), std::invalid_argument);

    SUBCASE("class autoencoders specialize to their class") {
        // Averaged over every class, own-class reconstruction beats
        // reconstructing with the neighboring class's model.
        double own = 0, other = 0;
        for (int64_t k = 0; k < kNumClasses; ++k) {
            auto idx = (w.held_out.labels == k).nonzero().squeeze(1);
            auto xk = w.held_out.images.index_select(0, idx);
            own += (aes.reconstruct(k, xk) - xk).abs().mean().item<double>();
            other += (aes.reconstruct((k + 1) % kNumClasses, xk) - xk).abs().mean().item<double>();
        }
        CHECK(own < other);
    }

    SUBCASE("checkpoint round-trip preserves reconstructions") {
        auto tmp = (std::filesystem::temp_directory_path() / "cgx-aes.ckpt").string();
        aes.save(tmp);
        auto loaded = ClassAutoencoders::load(tmp);
        CHECK(torch::equal(aes.reconstruct(2, x), loaded.reconstruct(2, x)));
        CHECK(torch::equal(aes.reconstruct_global(x), loaded.reconstruct_global(x)));
        std::filesystem::remove(tmp);
    }

    SUBCASE("an unreachable reconstruction gate raises a training error") {
        AutoencoderConfig strict = cfg;
        strict.epochs = 0;
        strict.recon_gate = 1e-6;
        CHECK_THROWS_WITH_AS(train_autoencoders(w.train, w.held_out, strict),
                             doctest::Contains("training error"), std::runtime_error);
    }
}

TEST_CASE("classifier body is four conv stages and one fully-connected head") {
    auto net = nets::classifier_net(8);
    int convs = 0, linears = 0;
    for (const auto& m : net->modules(false)) {
        if (m->as<torch::nn::Conv2d>()) ++convs;
        if (m->as<torch::nn::Linear>()) ++linears;
    }
    CHECK(convs == 4);
    CHECK(linears == 1);
}

TEST_CASE("autoencoder sides are two conv layers plus one fully-connected each") {
    nets::ConvAutoencoder ae(8, 32);
    int convs = 0, deconvs = 0, linears = 0;
    for (const auto& m : ae->modules(false)) {
        if (m->as<torch::nn::Conv2d>()) ++convs;
        if (m->as<torch::nn::ConvTranspose2d>()) ++deconvs;
        if (m->as<torch::nn::Linear>()) ++linears;
    }
    CHECK(convs == 2);
    CHECK(deconvs == 2);
    CHECK(linears == 2);
}

TEST_CASE("an independently seeded oracle disagrees with f somewhere") {
    const auto& w = testfix::tiny_world();
    ClassifierConfig cfg;
    cfg.epochs = 1;
    cfg.accuracy_gate = 0;
    auto oracle = train_classifier(w.train, w.held_out, 777, cfg);
    auto f_pred = predict_classes(w.classifier, w.held_out.images);
    auto o_pred = predict_classes(oracle, w.held_out.images);
    double agreement = (f_pred == o_pred).to(torch::kFloat64).mean().item<double>();
    CHECK(agreement < 1.0);
    CHECK(agreement > 0.3);  // they are still solving the same task
}
