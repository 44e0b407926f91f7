#pragma once

#include "cgx/cgm.hpp"
#include "cgx/types.hpp"

#include <torch/torch.h>

#include <memory>
#include <string>
#include <vector>

namespace cgx {

struct ClassifierConfig {
    int64_t channels = 16;
    int64_t epochs = 6;
    int64_t batch = 128;
    double lr = 1e-3;
    // Held-out accuracy the trained classifier must reach; <= 0 disables.
    double accuracy_gate = 0.95;
};

// Softmax image classifier: 4 conv stages + one fully-connected head.
class ClassifierHandle {
public:
    ClassifierHandle() = default;
    ClassifierHandle(torch::nn::Sequential net, uint64_t seed, int64_t channels,
                     double held_out_accuracy);

    // [N,1,28,28] -> [N,10] probabilities (sum to 1 per row).
    torch::Tensor scores(const torch::Tensor& images) const;
    // Differentiable logits for gradient-based explainers.
    torch::Tensor logits(const torch::Tensor& images) const;

    uint64_t seed() const { return seed_; }
    double held_out_accuracy() const { return held_out_accuracy_; }
    const std::string& architecture() const { return architecture_; }
    bool defined() const { return net_.get() != nullptr; }

    void save(const std::string& path) const;
    static ClassifierHandle load(const std::string& path);

private:
    std::shared_ptr<torch::nn::SequentialImpl> net_;
    uint64_t seed_ = 0;
    int64_t channels_ = 0;
    double held_out_accuracy_ = -1.0;
    std::string architecture_ = "conv4-fc1";
};

// Argmax with ties broken toward the lowest class index.
int64_t predict_class(const torch::Tensor& scores_row);
int64_t predict_class(const ClassifierHandle& f, const torch::Tensor& image);
torch::Tensor predict_classes(const ClassifierHandle& f, const torch::Tensor& images);

ClassifierHandle train_classifier(const TrainTensors& train, const TrainTensors& held_out,
                                  uint64_t seed, const ClassifierConfig& cfg = {});

// Independently seeded classifiers sharing the explained model's
// architecture, seeds base_seed .. base_seed+n-1.
struct OracleSet {
    std::vector<ClassifierHandle> oracles;
};

OracleSet train_oracles(const TrainTensors& train, const TrainTensors& held_out, int64_t n,
                        uint64_t base_seed, const ClassifierConfig& cfg = {});

struct AutoencoderConfig {
    int64_t channels = 16;
    int64_t bottleneck = 48;
    int64_t epochs = 12;
    int64_t batch = 128;
    double lr = 1e-3;
    // Held-out mean L1 each autoencoder must reach on its own class
    // distribution; <= 0 disables.
    double recon_gate = 0.08;
    uint64_t seed = 500;
};

// Ten class-conditional autoencoders plus one trained on every class, as
// required by the reconstruction-based interpretability metrics.
class ClassAutoencoders {
public:
    torch::Tensor reconstruct(int64_t class_index, const torch::Tensor& images) const;
    torch::Tensor reconstruct_global(const torch::Tensor& images) const;
    double held_out_l1(int64_t class_index) const { return held_out_l1_.at(size_t(class_index)); }
    double held_out_l1_global() const { return held_out_l1_global_; }

    void save(const std::string& path) const;
    static ClassAutoencoders load(const std::string& path);

    friend ClassAutoencoders train_autoencoders(const TrainTensors&, const TrainTensors&,
                                                const AutoencoderConfig&);

private:
    std::vector<nets::ConvAutoencoder> per_class_;
    nets::ConvAutoencoder global_{nullptr};
    std::vector<double> held_out_l1_;
    double held_out_l1_global_ = -1.0;
    AutoencoderConfig cfg_;
};

ClassAutoencoders train_autoencoders(const TrainTensors& train, const TrainTensors& held_out,
                                     const AutoencoderConfig& cfg = {});

}  // namespace cgx
