#pragma once

#include "cgx/cgm.hpp"
#include "cgx/classifiers.hpp"
#include "cgx/types.hpp"

#include <torch/torch.h>

#include <functional>
#include <memory>
#include <vector>

namespace cgx {

struct McConfig {
    int64_t m = 4;      // latent sample size
    uint64_t seed = 0;  // recorded seed for the frozen sample
};

// Monte-Carlo attribute classifier: f_hat(a) = (1/m) sum_i f(G(z_i, a)).
// The latent sample is drawn once from the model prior and frozen for the
// explainer's lifetime, making f_hat deterministic so the Shapley axioms
// hold exactly.
class McAttributeClassifier {
public:
    McAttributeClassifier(CgmHandle model, ClassifierHandle f, const McConfig& cfg = {});

    // attrs [N,3] normalized, labels [N] -> probability rows [N,10].
    torch::Tensor scores(const torch::Tensor& attrs, const torch::Tensor& labels) const;

    const torch::Tensor& latent_sample() const { return latents_; }
    const McConfig& config() const { return cfg_; }

private:
    CgmHandle model_;
    ClassifierHandle f_;
    McConfig cfg_;
    torch::Tensor latents_;  // [m, d_z]
};

// f_hat signature used by the Shapley routine; tests substitute toys.
using AttributeScoreFn =
    std::function<torch::Tensor(const torch::Tensor& attrs, const torch::Tensor& labels)>;

struct AttributeExplanation {
    torch::Tensor phi;   // [10,3] per-class, per-attribute Shapley values
    torch::Tensor base;  // [10] background expectation per class
    AttributeVector attributes;  // explained vector (normalized)
};

// Exact Shapley values over the three continuous attributes (2^3 coalitions,
// no sampling beyond f_hat's frozen latents). Absent attributes are imputed
// from the background rows; coalition values average f_hat over the
// background. Satisfies local accuracy: sum_attr phi = f_hat(a) - base.
AttributeExplanation attribute_shapley(const AttributeScoreFn& f_hat, const AttributeVector& a_norm,
                                       const torch::Tensor& background);
AttributeExplanation attribute_shapley(const McAttributeClassifier& f_hat,
                                       const AttributeVector& a_norm,
                                       const torch::Tensor& background);

// Mean of absolute Shapley values over the class score functions -> [3].
torch::Tensor local_importance(const AttributeExplanation& explanation);

struct GlobalImportance {
    torch::Tensor per_class;  // [10,3] median local importance per class
    torch::Tensor counts;     // [10] instances aggregated per class
};

// Median of local importances across explanations, grouped by class label.
// Classes with no explanation get count 0 and NaN importances.
GlobalImportance global_importance(const std::vector<AttributeExplanation>& explanations,
                                   const std::vector<int64_t>& class_labels);

}  // namespace cgx
