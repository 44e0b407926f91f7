#include "cgx/cgm.hpp"

#include "cgx/checkpoint.hpp"

#include <cmath>
#include <iostream>

namespace cgx {

namespace {

// Conditioning vector: continuous attributes next to the label embedding.
torch::Tensor condition_vector(const torch::Tensor& attrs, const torch::Tensor& embedding) {
    return torch::cat({attrs.to(torch::kFloat32), embedding}, 1);
}

struct VaeNetImpl : torch::nn::Module {
    VaeNetImpl(int64_t d_z, int64_t d_e, int64_t channels)
        : d_z_(d_z), d_e_(d_e), channels_(channels) {
        enc = register_module("enc", nets::image_encoder_stack(channels));
        const int64_t feat = nets::image_encoder_dim(channels);
        enc_mu = register_module("enc_mu",
                                 torch::nn::Linear(feat + kNumContinuous + d_e, d_z));
        enc_logvar = register_module("enc_logvar",
                                     torch::nn::Linear(feat + kNumContinuous + d_e, d_z));
        label_emb = register_module("label_emb", torch::nn::Embedding(kNumClasses, d_e));
        dec = register_module("dec", nets::DecoderStack(d_z + kNumContinuous + d_e, channels));
    }

    std::pair<torch::Tensor, torch::Tensor> encode_dist(const torch::Tensor& x,
                                                        const torch::Tensor& attrs,
                                                        const torch::Tensor& labels) {
        auto cond = condition_vector(attrs, label_emb->forward(labels));
        auto h = torch::cat({enc->forward(x), cond}, 1);
        return {enc_mu->forward(h), enc_logvar->forward(h)};
    }

    torch::Tensor decode(const torch::Tensor& z, const torch::Tensor& attrs,
                         const torch::Tensor& embedding) {
        return dec->forward(torch::cat({z, condition_vector(attrs, embedding)}, 1));
    }

    int64_t d_z_, d_e_, channels_;
    torch::nn::Sequential enc{nullptr};
    torch::nn::Linear enc_mu{nullptr}, enc_logvar{nullptr};
    torch::nn::Embedding label_emb{nullptr};
    nets::DecoderStack dec{nullptr};
};
TORCH_MODULE(VaeNet);

struct BiganNetImpl : torch::nn::Module {
    BiganNetImpl(int64_t d_z, int64_t d_e, int64_t channels)
        : d_z_(d_z), d_e_(d_e), channels_(channels) {
        enc = register_module("enc", nets::image_encoder_stack(channels));
        const int64_t feat = nets::image_encoder_dim(channels);
        enc_out = register_module("enc_out",
                                  torch::nn::Linear(feat + kNumContinuous + d_e, d_z));
        label_emb = register_module("label_emb", torch::nn::Embedding(kNumClasses, d_e));
        gen = register_module("gen", nets::DecoderStack(d_z + kNumContinuous + d_e, channels));
        // Joint discriminator over (image, latent, attributes).
        d_img = register_module("d_img", nets::image_encoder_stack(channels));
        d_joint = register_module(
            "d_joint",
            torch::nn::Sequential(
                torch::nn::Linear(nets::image_encoder_dim(channels) + d_z + kNumContinuous + d_e, 256),
                torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
                torch::nn::Linear(256, 256),
                torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
                torch::nn::Linear(256, 1)));
    }

    torch::Tensor encode(const torch::Tensor& x, const torch::Tensor& attrs,
                         const torch::Tensor& labels) {
        auto cond = condition_vector(attrs, label_emb->forward(labels));
        return enc_out->forward(torch::cat({enc->forward(x), cond}, 1));
    }

    torch::Tensor generate(const torch::Tensor& z, const torch::Tensor& attrs,
                           const torch::Tensor& embedding) {
        return gen->forward(torch::cat({z, condition_vector(attrs, embedding)}, 1));
    }

    torch::Tensor discriminate(const torch::Tensor& x, const torch::Tensor& z,
                               const torch::Tensor& attrs, const torch::Tensor& embedding) {
        auto joint = torch::cat({d_img->forward(x), z, condition_vector(attrs, embedding)}, 1);
        return d_joint->forward(joint).squeeze(1);
    }

    int64_t d_z_, d_e_, channels_;
    torch::nn::Sequential enc{nullptr};
    torch::nn::Linear enc_out{nullptr};
    torch::nn::Embedding label_emb{nullptr};
    nets::DecoderStack gen{nullptr};
    torch::nn::Sequential d_img{nullptr};
    torch::nn::Sequential d_joint{nullptr};
};
TORCH_MODULE(BiganNet);

nlohmann::json arch_meta(const CgmConfig& cfg, const std::string& kind) {
    return {{"kind", kind},
            {"d_z", cfg.d_z},
            {"d_e", cfg.d_e},
            {"channels", cfg.channels},
            {"seed", cfg.seed},
            {"layers", "conv5-encoder/deconv5-decoder"}};
}

CgmConfig config_from_meta(const nlohmann::json& meta) {
    CgmConfig cfg;
    cfg.d_z = meta.value("d_z", int64_t(64));
    cfg.d_e = meta.value("d_e", int64_t(16));
    cfg.channels = meta.value("channels", int64_t(16));
    cfg.seed = meta.value("seed", uint64_t(0));
    return cfg;
}

class VaeModel final : public CgmModel {
public:
    VaeModel(VaeNet net, CgmConfig cfg) : net_(std::move(net)), cfg_(cfg) {}

    CgmKind kind() const override { return CgmKind::Variational; }
    int64_t latent_dim() const override { return cfg_.d_z; }
    int64_t embed_dim() const override { return cfg_.d_e; }

    torch::Tensor encode(const torch::Tensor& images, const torch::Tensor& attrs,
                         const torch::Tensor& labels) const override {
        torch::NoGradGuard ng;
        auto [mu, logvar] = net()->encode_dist(images, attrs.to(torch::kFloat32), labels);
        return mu;  // posterior mean at inference time
    }

    torch::Tensor generate_from_embedding(const torch::Tensor& z, const torch::Tensor& attrs,
                                          const torch::Tensor& embedding) const override {
        return net()->decode(z, attrs.to(torch::kFloat32), embedding);
    }

    torch::Tensor embedding_matrix() const override { return net()->label_emb->weight.detach(); }

    void save(const std::string& path) const override {
        Checkpoint ckpt;
        ckpt.meta = arch_meta(cfg_, "vae");
        ckpt.put_module("net", *net_);
        ckpt.save(path);
    }

    torch::nn::Module& module() override { return *net_; }

    VaeNet& net() const { return const_cast<VaeModel*>(this)->net_; }

    VaeNet net_;
    CgmConfig cfg_;
};

class BiganModel final : public CgmModel {
public:
    BiganModel(BiganNet net, CgmConfig cfg) : net_(std::move(net)), cfg_(cfg) {}

    CgmKind kind() const override { return CgmKind::Adversarial; }
    int64_t latent_dim() const override { return cfg_.d_z; }
    int64_t embed_dim() const override { return cfg_.d_e; }

    torch::Tensor encode(const torch::Tensor& images, const torch::Tensor& attrs,
                         const torch::Tensor& labels) const override {
        torch::NoGradGuard ng;
        return net()->encode(images, attrs.to(torch::kFloat32), labels);
    }

    torch::Tensor generate_from_embedding(const torch::Tensor& z, const torch::Tensor& attrs,
                                          const torch::Tensor& embedding) const override {
        return net()->generate(z, attrs.to(torch::kFloat32), embedding);
    }

    torch::Tensor embedding_matrix() const override { return net()->label_emb->weight.detach(); }

    void save(const std::string& path) const override {
        Checkpoint ckpt;
        ckpt.meta = arch_meta(cfg_, "bigan");
        ckpt.put_module("net", *net_);
        ckpt.save(path);
    }

    torch::nn::Module& module() override { return *net_; }

    BiganNet& net() const { return const_cast<BiganModel*>(this)->net_; }

    BiganNet net_;
    CgmConfig cfg_;
};

double held_out_reconstruction_l1(const CgmModel& model, const TrainTensors& held_out) {
    torch::NoGradGuard ng;
    double total = 0.0;
    int64_t n = held_out.images.size(0);
    for (int64_t start = 0; start < n; start += 256) {
        int64_t len = std::min<int64_t>(256, n - start);
        auto x = held_out.images.narrow(0, start, len);
        auto a = held_out.attrs.narrow(0, start, len);
        auto l = held_out.labels.narrow(0, start, len);
        auto rec = model.counterfactual_image(x, a, l, a, l);
        total += (rec - x).abs().mean().item<double>() * double(len);
    }
    return total / double(n);
}

}  // namespace

std::string to_string(CgmKind kind) {
    return kind == CgmKind::Variational ? "vae" : "bigan";
}

TrainTensors make_training_tensors(const Dataset& data, const AttributeNormalizer& normalizer) {
    TrainTensors t;
    t.images = data.images();
    t.attrs = normalizer.normalize_matrix(data.attribute_matrix()).to(torch::kFloat32);
    t.labels = data.labels();
    return t;
}

torch::Tensor CgmModel::generate(const torch::Tensor& z, const torch::Tensor& attrs,
                                 const torch::Tensor& labels) const {
    if (z.dim() != 2 || z.size(1) != latent_dim())
        throw std::invalid_argument("generate: latent must be [N," + std::to_string(latent_dim()) + "]");
    auto emb = embedding_matrix().index_select(0, labels);
    return generate_from_embedding(z, attrs, emb);
}

torch::Tensor CgmModel::counterfactual_image(const torch::Tensor& images, const torch::Tensor& attrs,
                                             const torch::Tensor& labels,
                                             const torch::Tensor& cf_attrs,
                                             const torch::Tensor& cf_labels) const {
    auto z = encode(images, attrs, labels);
    return generate(z, cf_attrs, cf_labels);
}

CgmHandle train_vae(const TrainTensors& train, const TrainTensors& held_out, const CgmConfig& cfg,
                    CgmDiagnostics* diagnostics) {
    torch::manual_seed(cfg.seed);
    VaeNet net(cfg.d_z, cfg.d_e, cfg.channels);
    net->train();
    torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(cfg.lr));

    const int64_t n = train.images.size(0);
    CgmDiagnostics diag;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto perm = torch::randperm(n, torch::kInt64);
        double epoch_loss = 0.0;
        for (int64_t start = 0; start < n; start += cfg.batch) {
            int64_t len = std::min(cfg.batch, n - start);
            auto idx = perm.narrow(0, start, len);
            auto x = train.images.index_select(0, idx);
            auto a = train.attrs.index_select(0, idx);
            auto l = train.labels.index_select(0, idx);

            opt.zero_grad();
            auto [mu, logvar] = net->encode_dist(x, a, l);
            auto z = mu + torch::randn_like(mu) * (0.5 * logvar).exp();
            auto recon = net->decode(z, a, net->label_emb->forward(l));
            auto bce = torch::binary_cross_entropy(recon.clamp(1e-6, 1.0 - 1e-6), x,
                                                   {}, torch::Reduction::Sum) /
                       double(len);
            auto kl = (-0.5 * (1 + logvar - mu.pow(2) - logvar.exp()).sum()) / double(len);
            auto loss = bce + cfg.beta * kl;
            double lv = loss.item<double>();
            if (!std::isfinite(lv)) throw std::runtime_error("training error: non-finite VAE loss");
            loss.backward();
            opt.step();
            epoch_loss += lv * double(len);
        }
        diag.epoch_losses.push_back(epoch_loss / double(n));
    }
    net->eval();
    nets::freeze(*net);

    auto model = std::make_shared<VaeModel>(std::move(net), cfg);
    diag.held_out_l1 = held_out_reconstruction_l1(*model, held_out);
    if (cfg.recon_gate > 0 && diag.held_out_l1 > cfg.recon_gate)
        throw std::runtime_error("training error: VAE held-out reconstruction L1 " +
                                 std::to_string(diag.held_out_l1) + " exceeds gate " +
                                 std::to_string(cfg.recon_gate));
    if (diagnostics) *diagnostics = diag;
    return model;
}

CgmHandle train_bigan(const TrainTensors& train, const TrainTensors& held_out, const CgmConfig& cfg,
                      CgmDiagnostics* diagnostics) {
    torch::manual_seed(cfg.seed);
    BiganNet net(cfg.d_z, cfg.d_e, cfg.channels);
    nets::gan_weight_init(*net);
    net->train();

    std::vector<torch::Tensor> eg_params, d_params;
    for (auto& p : net->enc->parameters()) eg_params.push_back(p);
    for (auto& p : net->enc_out->parameters()) eg_params.push_back(p);
    for (auto& p : net->gen->parameters()) eg_params.push_back(p);
    for (auto& p : net->label_emb->parameters()) eg_params.push_back(p);
    for (auto& p : net->d_img->parameters()) d_params.push_back(p);
    for (auto& p : net->d_joint->parameters()) d_params.push_back(p);

    torch::optim::Adam opt_eg(eg_params, torch::optim::AdamOptions(cfg.lr_gan).betas({0.5, 0.999}));
    torch::optim::Adam opt_d(d_params,
                             torch::optim::AdamOptions(0.5 * cfg.lr_gan).betas({0.5, 0.999}));

    auto bce_logits = [](const torch::Tensor& logits, double target) {
        return torch::binary_cross_entropy_with_logits(
            logits, torch::full_like(logits, target));
    };
    // Instance noise on the discriminator's inputs. Images: keeps it from
    // saturating against the sharper real glyphs. Latents: a deterministic
    // encoder makes z == E(x) an exact giveaway on real pairs, so both sides'
    // latents are jittered by the same amount.
    const double d_noise = 0.15;
    const double d_z_noise = 0.35;
    auto blur = [&](const torch::Tensor& img) { return img + d_noise * torch::randn_like(img); };
    auto jitter = [&](const torch::Tensor& z) { return z + d_z_noise * torch::randn_like(z); };

    const int64_t n = train.images.size(0);
    CgmDiagnostics diag;
    double d_acc_ema = 0.5;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto perm = torch::randperm(n, torch::kInt64);
        double epoch_loss = 0.0;
        for (int64_t start = 0; start < n; start += cfg.batch) {
            int64_t len = std::min(cfg.batch, n - start);
            auto idx = perm.narrow(0, start, len);
            auto x = train.images.index_select(0, idx);
            auto a = train.attrs.index_select(0, idx);
            auto l = train.labels.index_select(0, idx);
            auto emb = net->label_emb->forward(l);
            auto z_prior = torch::randn({len, cfg.d_z});

            // Discriminator: real (x, E(x,a), a) vs fake (G(z,a), z, a),
            // with one-sided label smoothing on the real pairs. Updates are
            // throttled whenever the running accuracy leaves the equilibrium
            // band, so the two sides stay matched.
            opt_d.zero_grad();
            auto z_enc = net->encode(x, a, l).detach();
            auto x_gen = net->generate(z_prior, a, emb).detach();
            auto real_logit = net->discriminate(blur(x), jitter(z_enc), a, emb.detach());
            auto fake_logit = net->discriminate(blur(x_gen), jitter(z_prior), a, emb.detach());
            {
                torch::NoGradGuard ng;
                double acc = 0.5 * ((real_logit > 0).to(torch::kFloat64).mean().item<double>() +
                                    (fake_logit <= 0).to(torch::kFloat64).mean().item<double>());
                d_acc_ema = 0.9 * d_acc_ema + 0.1 * acc;
            }
            auto d_loss = bce_logits(real_logit, 0.9) + bce_logits(fake_logit, 0.0);
            if (d_acc_ema < 0.62) {
                d_loss.backward();
                opt_d.step();
            }

            // Encoder+generator: fool the discriminator on both pair types,
            // anchored by the reconstruction term. The moment penalty keeps
            // encoded latents near the N(0,1) prior, and the latent cycle on
            // the prior path pins G(z) to images the encoder can invert,
            // which rules out generator collapse.
            opt_eg.zero_grad();
            auto emb2 = net->label_emb->forward(l);
            auto z_enc2 = net->encode(x, a, l);
            auto x_gen2 = net->generate(z_prior, a, emb2);
            auto z_noisy = cfg.latent_noise > 0
                               ? z_enc2 + cfg.latent_noise * torch::randn_like(z_enc2)
                               : z_enc2;
            auto x_rec = net->generate(z_noisy, a, emb2);
            auto z_cycle = net->encode(x_gen2, a, l);
            auto z_mean = z_enc2.mean(0);
            auto z_var = z_enc2.var(0, /*unbiased=*/false);
            auto moment_penalty = z_mean.pow(2).mean() + (z_var - 1.0).pow(2).mean();
            auto recon = torch::binary_cross_entropy(x_rec.clamp(1e-6, 1.0 - 1e-6), x, {},
                                                     torch::Reduction::Sum) /
                         double(len);
            auto g_loss =
                bce_logits(net->discriminate(blur(x), jitter(z_enc2), a, emb2), 0.0) +
                bce_logits(net->discriminate(blur(x_gen2), jitter(z_prior), a, emb2), 1.0) +
                          cfg.recon_weight * recon + moment_penalty +
                          (z_cycle - z_prior).pow(2).mean();
            double gv = g_loss.item<double>();
            double dv = d_loss.item<double>();
            if (!std::isfinite(gv) || !std::isfinite(dv))
                throw std::runtime_error("training error: non-finite BiGAN loss");
            g_loss.backward();
            opt_eg.step();
            epoch_loss += gv * double(len);
        }
        diag.epoch_losses.push_back(epoch_loss / double(n));
    }
    net->eval();
    nets::freeze(*net);

    {
        torch::NoGradGuard ng;
        // Mode-collapse heuristic on a generated batch.
        auto z = torch::randn({64, cfg.d_z});
        auto idx = torch::randperm(n, torch::kInt64).narrow(0, 0, 64);
        auto a = train.attrs.index_select(0, idx);
        auto l = train.labels.index_select(0, idx);
        auto gen = net->generate(z, a, net->label_emb->forward(l));
        double var = gen.var().item<double>();
        if (var < 1e-4) {
            diag.mode_collapse_warning = true;
            std::cerr << "[cgx] warning: generated-batch pixel variance " << var
                      << " < 1e-4 (possible mode collapse)\n";
        }
        // Discriminator accuracy on a held-out batch (real vs generated).
        int64_t m = std::min<int64_t>(256, held_out.images.size(0));
        auto hx = held_out.images.narrow(0, 0, m);
        auto ha = held_out.attrs.narrow(0, 0, m);
        auto hl = held_out.labels.narrow(0, 0, m);
        auto hemb = net->label_emb->forward(hl);
        auto hz = torch::randn({m, cfg.d_z});
        auto noisy = [&](const torch::Tensor& img) { return img + 0.15 * torch::randn_like(img); };
        auto jit = [&](const torch::Tensor& z) { return z + 0.35 * torch::randn_like(z); };
        auto real_logit = net->discriminate(noisy(hx), jit(net->encode(hx, ha, hl)), ha, hemb);
        auto fake_logit =
            net->discriminate(noisy(net->generate(hz, ha, hemb)), jit(hz), ha, hemb);
        double acc = 0.5 * ((real_logit > 0).to(torch::kFloat64).mean().item<double>() +
                            (fake_logit <= 0).to(torch::kFloat64).mean().item<double>());
        diag.discriminator_accuracy = acc;
    }

    auto model = std::make_shared<BiganModel>(std::move(net), cfg);
    diag.held_out_l1 = held_out_reconstruction_l1(*model, held_out);
    if (cfg.recon_gate > 0 && diag.held_out_l1 > cfg.recon_gate)
        throw std::runtime_error("training error: BiGAN held-out reconstruction L1 " +
                                 std::to_string(diag.held_out_l1) + " exceeds gate " +
                                 std::to_string(cfg.recon_gate));
    if (diagnostics) *diagnostics = diag;
    return model;
}

CgmHandle load_cgm(const std::string& path) {
    Checkpoint ckpt = Checkpoint::load(path);
    std::string kind = ckpt.meta.value("kind", "");
    CgmConfig cfg = config_from_meta(ckpt.meta);
    if (kind == "vae") {
        VaeNet net(cfg.d_z, cfg.d_e, cfg.channels);
        ckpt.load_module("net", *net);
        net->eval();
        nets::freeze(*net);
        return std::make_shared<VaeModel>(std::move(net), cfg);
    }
    if (kind == "bigan") {
        BiganNet net(cfg.d_z, cfg.d_e, cfg.channels);
        ckpt.load_module("net", *net);
        net->eval();
        nets::freeze(*net);
        return std::make_shared<BiganModel>(std::move(net), cfg);
    }
    throw std::runtime_error("not a CGM checkpoint: " + path);
}

torch::Tensor expected_embedding(const torch::Tensor& embedding_matrix, const torch::Tensor& p,
                                 double tol) {
    if (p.dim() != 1 || p.size(0) != embedding_matrix.size(0))
        throw std::invalid_argument("distribution error: p must have one entry per class");
    auto pd = p.to(torch::kFloat64);
    if ((pd < -tol).any().item<bool>())
        throw std::invalid_argument("distribution error: negative probability");
    double sum = pd.sum().item<double>();
    if (std::abs(sum - 1.0) > tol)
        throw std::invalid_argument("distribution error: probabilities sum to " + std::to_string(sum));
    return (p.to(embedding_matrix.dtype()).unsqueeze(0).mm(embedding_matrix)).squeeze(0);
}

torch::Tensor interpolated_embedding(const torch::Tensor& embedding_matrix, int64_t y, int64_t y_t,
                                     double alpha) {
    if (alpha < 0.0 || alpha > 1.0)
        throw std::invalid_argument("range error: alpha must be in [0,1]");
    if (y < 0 || y >= embedding_matrix.size(0) || y_t < 0 || y_t >= embedding_matrix.size(0))
        throw std::invalid_argument("range error: class index out of range");
    return alpha * embedding_matrix[y_t] + (1.0 - alpha) * embedding_matrix[y];
}

}  // namespace cgx
