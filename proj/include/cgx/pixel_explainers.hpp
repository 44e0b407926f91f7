#pragma once

#include "cgx/cgm.hpp"
#include "cgx/classifiers.hpp"
#include "cgx/scm.hpp"
#include "cgx/types.hpp"

#include <torch/torch.h>

#include <functional>
#include <optional>
#include <vector>

namespace cgx {

// Per-class signed pixel attributions plus the background expectation of
// each class score.
struct SaliencyMap {
    torch::Tensor maps;         // [10,28,28]
    torch::Tensor base_values;  // [10]
};

// Differentiable score function [N,1,28,28] -> [N,10]; the classifier
// overload uses softmax scores.
using PixelScoreFn = std::function<torch::Tensor(const torch::Tensor& images)>;

// Shapley-value pixel attributions via the expected-gradients estimator:
// attribution_j = E_{x_b, u~U(0,1)}[(x_j - x_b,j) * d f_k/d x_j (x_b + u(x - x_b))].
// Per-class attribution sums approximate f_k(x) - E_background[f_k]
// (completeness) with Monte-Carlo error shrinking in n_samples.
SaliencyMap shapley_saliency(const PixelScoreFn& f, const torch::Tensor& image,
                             const torch::Tensor& background, int64_t n_samples,
                             uint64_t seed = 17);
SaliencyMap shapley_saliency(const ClassifierHandle& f, const torch::Tensor& image,
                             const torch::Tensor& background, int64_t n_samples,
                             uint64_t seed = 17);

struct ContrastiveConfig {
    double kappa = 0.0;    // decision margin
    double beta = 0.1;     // L1 weight in the elastic net
    double c_init = 10.0;  // attack-term weight, tuned by binary search
    int64_t c_steps = 9;
    int64_t steps = 200;   // projected-gradient iterations per c round
    double lr = 0.05;
};

// Pertinent negative: a minimal additive perturbation delta with
// argmax f(x+delta) != argmax f(x); pertinent positive: a minimal retained
// part r in [0, x] with argmax f(r) = argmax f(x). Budget exhaustion flags
// failure instead of throwing.
struct ContrastiveResult {
    torch::Tensor pn_delta;     // [1,28,28] signed perturbation
    bool pn_success = false;
    torch::Tensor pp_retained;  // [1,28,28], elementwise within [0, x]
    bool pp_success = false;
    torch::Tensor scores_x;     // [10]
    torch::Tensor scores_pn;    // [10] scores of x + delta
    torch::Tensor scores_pp;    // [10] scores of the retained part
};

ContrastiveResult pertinent_negative(const ClassifierHandle& f, const torch::Tensor& image,
                                     const ContrastiveConfig& cfg = {});
ContrastiveResult pertinent_positive(const ClassifierHandle& f, const torch::Tensor& image,
                                     const ContrastiveConfig& cfg = {});
// Both parts in one result.
ContrastiveResult contrastive_explain(const ClassifierHandle& f, const torch::Tensor& image,
                                      const ContrastiveConfig& cfg = {});

enum class SweepExplainer { Shapley, Contrastive };

struct SweepConfig {
    int attribute = 0;  // 0 thickness, 1 intensity, 2 slant
    std::vector<double> values = {-0.8, -0.5, 0.0, 0.5, 0.8};  // normalized units
    SweepExplainer explainer = SweepExplainer::Shapley;
    int64_t shap_samples = 200;
    uint64_t seed = 17;
    bool propagate = true;  // route interventions through the SCM mechanisms
    ContrastiveConfig contrastive;
};

struct SweepEntry {
    double value;
    AttributeVector attributes;  // counterfactual attributes, normalized
    torch::Tensor counterfactual;
    torch::Tensor scores;  // full class-score vector
    std::optional<SaliencyMap> saliency;
    std::optional<ContrastiveResult> contrastive;
};

struct SweepResult {
    torch::Tensor latent;  // E(x,a), shared bitwise by every entry
    std::vector<SweepEntry> entries;
};

// Counterfactual sweep over one attribute: for each v in cfg.values the
// observation's attributes are intervened with do(a_i=v), the counterfactual
// image is generated from the shared latent, and the chosen pixel explainer
// is applied to it.
SweepResult sweep_explain(const CgmModel& model, const AttributeScm& scm, const ClassifierHandle& f,
                          const torch::Tensor& image, const AttributeVector& a_norm,
                          const torch::Tensor& background, const SweepConfig& cfg);

}  // namespace cgx
