#include "cgx/classifiers.hpp"

#include "cgx/checkpoint.hpp"
#include "cgx/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace cgx {

ClassifierHandle::ClassifierHandle(torch::nn::Sequential net, uint64_t seed, int64_t channels,
                                   double held_out_accuracy)
    : net_(net.ptr()), seed_(seed), channels_(channels), held_out_accuracy_(held_out_accuracy) {}

torch::Tensor ClassifierHandle::logits(const torch::Tensor& images) const {
    if (!net_) throw std::runtime_error("classifier not trained");
    return net_->forward(images);
}

torch::Tensor ClassifierHandle::scores(const torch::Tensor& images) const {
    return torch::softmax(logits(images), 1);
}

void ClassifierHandle::save(const std::string& path) const {
    Checkpoint ckpt;
    ckpt.meta = {{"kind", "classifier"},
                 {"seed", seed_},
                 {"channels", channels_},
                 {"architecture", architecture_},
                 {"held_out_accuracy", held_out_accuracy_}};
    ckpt.put_module("net", *net_);
    ckpt.save(path);
}

ClassifierHandle ClassifierHandle::load(const std::string& path) {
    Checkpoint ckpt = Checkpoint::load(path);
    if (ckpt.meta.value("kind", "") != "classifier")
        throw std::runtime_error("not a classifier checkpoint: " + path);
    int64_t channels = ckpt.meta.value("channels", int64_t(16));
    auto net = nets::classifier_net(channels);
    ckpt.load_module("net", *net);
    net->eval();
    nets::freeze(*net);
    return ClassifierHandle(std::move(net), ckpt.meta.value("seed", uint64_t(0)), channels,
                            ckpt.meta.value("held_out_accuracy", -1.0));
}

int64_t predict_class(const torch::Tensor& scores_row) {
    auto s = scores_row.to(torch::kFloat64).contiguous();
    if (s.dim() != 1) throw std::invalid_argument("predict_class: expected a score vector");
    auto acc = s.accessor<double, 1>();
    int64_t best = 0;
    for (int64_t k = 1; k < s.size(0); ++k)
        if (acc[k] > acc[best]) best = k;  // ties keep the lowest index
    return best;
}

int64_t predict_class(const ClassifierHandle& f, const torch::Tensor& image) {
    torch::NoGradGuard ng;
    auto img = image.dim() == 3 ? image.unsqueeze(0) : image;
    return predict_class(f.scores(img).squeeze(0));
}

torch::Tensor predict_classes(const ClassifierHandle& f, const torch::Tensor& images) {
    torch::NoGradGuard ng;
    torch::Tensor out = torch::empty({images.size(0)}, torch::kInt64);
    auto acc = out.accessor<int64_t, 1>();
    for (int64_t start = 0; start < images.size(0); start += 512) {
        int64_t len = std::min<int64_t>(512, images.size(0) - start);
        auto scores = f.scores(images.narrow(0, start, len));
        for (int64_t i = 0; i < len; ++i) acc[start + i] = predict_class(scores[i]);
    }
    return out;
}

namespace {

double held_out_accuracy(const ClassifierHandle& f, const TrainTensors& held_out) {
    auto pred = predict_classes(f, held_out.images);
    return (pred == held_out.labels).to(torch::kFloat64).mean().item<double>();
}

}  // namespace

ClassifierHandle train_classifier(const TrainTensors& train, const TrainTensors& held_out,
                                  uint64_t seed, const ClassifierConfig& cfg) {
    torch::manual_seed(seed);
    auto net = nets::classifier_net(cfg.channels);
    net->train();
    torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(cfg.lr));
    const int64_t n = train.images.size(0);
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto perm = torch::randperm(n, torch::kInt64);
        for (int64_t start = 0; start < n; start += cfg.batch) {
            int64_t len = std::min(cfg.batch, n - start);
            auto idx = perm.narrow(0, start, len);
            opt.zero_grad();
            auto loss = torch::cross_entropy_loss(net->forward(train.images.index_select(0, idx)),
                                                  train.labels.index_select(0, idx));
            if (!std::isfinite(loss.item<double>()))
                throw std::runtime_error("training error: non-finite classifier loss");
            loss.backward();
            opt.step();
        }
    }
    net->eval();
    nets::freeze(*net);
    double acc = held_out_accuracy(ClassifierHandle(net, seed, cfg.channels, -1.0), held_out);
    if (cfg.accuracy_gate > 0 && acc < cfg.accuracy_gate)
        throw std::runtime_error("training error: held-out accuracy " + std::to_string(acc) +
                                 " below gate " + std::to_string(cfg.accuracy_gate) + " (seed " +
                                 std::to_string(seed) + ", epochs " + std::to_string(cfg.epochs) + ")");
    return ClassifierHandle(net, seed, cfg.channels, acc);
}

OracleSet train_oracles(const TrainTensors& train, const TrainTensors& held_out, int64_t n,
                        uint64_t base_seed, const ClassifierConfig& cfg) {
    if (n < 1) throw std::invalid_argument("train_oracles: n must be >= 1");
    OracleSet set;
    for (int64_t i = 0; i < n; ++i)
        set.oracles.push_back(train_classifier(train, held_out, base_seed + uint64_t(i), cfg));
    return set;
}

namespace {

nets::ConvAutoencoder train_one_autoencoder(const torch::Tensor& images,
                                            const torch::Tensor& held_images,
                                            const AutoencoderConfig& cfg, uint64_t seed,
                                            const std::string& tag, double* out_l1) {
    torch::manual_seed(seed);
    nets::ConvAutoencoder ae(cfg.channels, cfg.bottleneck);
    ae->train();
    torch::optim::Adam opt(ae->parameters(), torch::optim::AdamOptions(cfg.lr));
    const int64_t n = images.size(0);
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto perm = torch::randperm(n, torch::kInt64);
        for (int64_t start = 0; start < n; start += cfg.batch) {
            int64_t len = std::min(cfg.batch, n - start);
            auto x = images.index_select(0, perm.narrow(0, start, len));
            opt.zero_grad();
            auto rec = ae->forward(x);
            auto loss = (rec - x).abs().mean() + (rec - x).pow(2).mean();
            if (!std::isfinite(loss.item<double>()))
                throw std::runtime_error("training error: non-finite autoencoder loss (" + tag + ")");
            loss.backward();
            opt.step();
        }
    }
    ae->eval();
    nets::freeze(*ae);
    torch::NoGradGuard ng;
    double l1 = (ae->forward(held_images) - held_images).abs().mean().item<double>();
    if (cfg.recon_gate > 0 && l1 > cfg.recon_gate)
        throw std::runtime_error("training error: autoencoder " + tag + " held-out L1 " +
                                 std::to_string(l1) + " exceeds gate " +
                                 std::to_string(cfg.recon_gate));
    if (out_l1) *out_l1 = l1;
    return ae;
}

}  // namespace

torch::Tensor ClassAutoencoders::reconstruct(int64_t class_index, const torch::Tensor& images) const {
    torch::NoGradGuard ng;
    if (class_index < 0 || class_index >= int64_t(per_class_.size()))
        throw std::invalid_argument("reconstruct: class index out of range");
    return const_cast<nets::ConvAutoencoder&>(per_class_[size_t(class_index)])->forward(images);
}

torch::Tensor ClassAutoencoders::reconstruct_global(const torch::Tensor& images) const {
    torch::NoGradGuard ng;
    return const_cast<nets::ConvAutoencoder&>(global_)->forward(images);
}

ClassAutoencoders train_autoencoders(const TrainTensors& train, const TrainTensors& held_out,
                                     const AutoencoderConfig& cfg) {
    ClassAutoencoders out;
    out.cfg_ = cfg;
    out.held_out_l1_.resize(kNumClasses, -1.0);
    for (int64_t k = 0; k < kNumClasses; ++k) {
        auto train_idx = (train.labels == k).nonzero().squeeze(1);
        auto held_idx = (held_out.labels == k).nonzero().squeeze(1);
        if (train_idx.numel() == 0 || held_idx.numel() == 0)
            throw std::runtime_error("training error: no class-" + std::to_string(k) + " images");
        double l1 = -1;
        out.per_class_.push_back(train_one_autoencoder(
            train.images.index_select(0, train_idx), held_out.images.index_select(0, held_idx), cfg,
            cfg.seed + uint64_t(k), "class-" + std::to_string(k), &l1));
        out.held_out_l1_[size_t(k)] = l1;
    }
    out.global_ = train_one_autoencoder(train.images, held_out.images, cfg,
                                        cfg.seed + kNumClasses, "global", &out.held_out_l1_global_);
    return out;
}

void ClassAutoencoders::save(const std::string& path) const {
    Checkpoint ckpt;
    ckpt.meta = {{"kind", "class-autoencoders"},
                 {"channels", cfg_.channels},
                 {"bottleneck", cfg_.bottleneck},
                 {"seed", cfg_.seed},
                 {"held_out_l1_global", held_out_l1_global_}};
    ckpt.meta["held_out_l1"] = held_out_l1_;
    for (int64_t k = 0; k < kNumClasses; ++k)
        ckpt.put_module("ae." + std::to_string(k), *per_class_[size_t(k)]);
    ckpt.put_module("ae.global", *global_);
    ckpt.save(path);
}

ClassAutoencoders ClassAutoencoders::load(const std::string& path) {
    Checkpoint ckpt = Checkpoint::load(path);
    if (ckpt.meta.value("kind", "") != "class-autoencoders")
        throw std::runtime_error("not an autoencoder checkpoint: " + path);
    ClassAutoencoders out;
    out.cfg_.channels = ckpt.meta.value("channels", int64_t(16));
    out.cfg_.bottleneck = ckpt.meta.value("bottleneck", int64_t(48));
    out.held_out_l1_global_ = ckpt.meta.value("held_out_l1_global", -1.0);
    if (ckpt.meta.contains("held_out_l1"))
        out.held_out_l1_ = ckpt.meta["held_out_l1"].get<std::vector<double>>();
    for (int64_t k = 0; k < kNumClasses; ++k) {
        nets::ConvAutoencoder ae(out.cfg_.channels, out.cfg_.bottleneck);
        ckpt.load_module("ae." + std::to_string(k), *ae);
        ae->eval();
        nets::freeze(*ae);
        out.per_class_.push_back(std::move(ae));
    }
    out.global_ = nets::ConvAutoencoder(out.cfg_.channels, out.cfg_.bottleneck);
    ckpt.load_module("ae.global", *out.global_);
    out.global_->eval();
    nets::freeze(*out.global_);
    return out;
}

}  // namespace cgx
