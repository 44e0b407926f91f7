#pragma once

#include "cgx/dataset.hpp"
#include "cgx/nets.hpp"
#include "cgx/types.hpp"

#include <torch/torch.h>

#include <memory>
#include <string>
#include <vector>

namespace cgx {

enum class CgmKind { Variational, Adversarial };

std::string to_string(CgmKind kind);

struct CgmConfig {
    int64_t d_z = 64;
    int64_t d_e = 16;
    int64_t channels = 16;
    int64_t epochs = 30;
    int64_t batch = 128;
    double lr = 1e-3;           // variational model
    double lr_gan = 5e-4;       // adversarial model (discriminator runs at half)
    double beta = 1.0;          // KL weight
    double recon_weight = 1.0;  // adversarial reconstruction anchor (sum-BCE scale)
    double latent_noise = 0.35; // adversarial recon-path jitter; keeps the label
                                // conditioning load-bearing instead of the latent
    uint64_t seed = 0;
    // Held-out mean per-pixel L1 the trained model must reach; <= 0 disables
    // the check (used by short smoke runs).
    double recon_gate = 0.05;
};

struct CgmDiagnostics {
    std::vector<double> epoch_losses;       // main objective per epoch
    double held_out_l1 = -1.0;              // identity-intervention reconstruction
    double discriminator_accuracy = -1.0;   // adversarial model only
    bool mode_collapse_warning = false;
};

// Batched training views: images [N,1,28,28] float32, continuous attributes
// [N,3] float32 in normalized units, labels [N] int64.
struct TrainTensors {
    torch::Tensor images;
    torch::Tensor attrs;
    torch::Tensor labels;
};

TrainTensors make_training_tensors(const Dataset& data, const AttributeNormalizer& normalizer);

// A trained causal generative image model: deterministic encoder
// E(x, a) -> latent and generator G(latent, a) -> image, with the label
// injected through an embedding lookup so that arbitrary embedding vectors
// (label mixtures, interpolations) can be fed to the generator.
class CgmModel {
public:
    virtual ~CgmModel() = default;

    virtual CgmKind kind() const = 0;
    virtual int64_t latent_dim() const = 0;
    virtual int64_t embed_dim() const = 0;

    // Deterministic; for the variational model this is the posterior mean.
    // images [N,1,28,28], attrs [N,3] normalized, labels [N] -> [N,d_z].
    virtual torch::Tensor encode(const torch::Tensor& images, const torch::Tensor& attrs,
                                 const torch::Tensor& labels) const = 0;

    // Differentiable when the inputs require grad. z [N,d_z], attrs [N,3],
    // embedding [N,d_e] -> images [N,1,28,28] in [0,1].
    virtual torch::Tensor generate_from_embedding(const torch::Tensor& z, const torch::Tensor& attrs,
                                                  const torch::Tensor& embedding) const = 0;

    // Label-index convenience: looks up e(label) and generates.
    torch::Tensor generate(const torch::Tensor& z, const torch::Tensor& attrs,
                           const torch::Tensor& labels) const;

    // The trained lookup table, [10, d_e].
    virtual torch::Tensor embedding_matrix() const = 0;

    // x' = G(E(x,a), a') per the counterfactual construction.
    torch::Tensor counterfactual_image(const torch::Tensor& images, const torch::Tensor& attrs,
                                       const torch::Tensor& labels, const torch::Tensor& cf_attrs,
                                       const torch::Tensor& cf_labels) const;

    virtual void save(const std::string& path) const = 0;

    virtual torch::nn::Module& module() = 0;
};

using CgmHandle = std::shared_ptr<CgmModel>;

CgmHandle train_vae(const TrainTensors& train, const TrainTensors& held_out, const CgmConfig& cfg,
                    CgmDiagnostics* diagnostics = nullptr);
CgmHandle train_bigan(const TrainTensors& train, const TrainTensors& held_out, const CgmConfig& cfg,
                      CgmDiagnostics* diagnostics = nullptr);

CgmHandle load_cgm(const std::string& path);

// Expected label embedding under a distribution p over classes:
// sum_k p_k e(k). Throws a distribution error unless p is a [10] probability
// vector summing to 1 within tol.
torch::Tensor expected_embedding(const torch::Tensor& embedding_matrix, const torch::Tensor& p,
                                 double tol = 1e-6);

// e_alpha = alpha e(y_t) + (1-alpha) e(y); alpha must lie in [0,1].
torch::Tensor interpolated_embedding(const torch::Tensor& embedding_matrix, int64_t y, int64_t y_t,
                                     double alpha);

}  // namespace cgx
