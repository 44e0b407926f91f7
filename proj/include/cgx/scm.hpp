#pragma once

#include "cgx/checkpoint.hpp"
#include "cgx/types.hpp"

#include <torch/torch.h>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cgx {

// Directed graph over {thickness, intensity, slant, label, image} with the
// fixed Morpho-MNIST edge set: t->i, t->o, i->o, s->o, l->o.
struct CausalGraph {
    std::vector<std::string> nodes;
    std::vector<std::pair<std::string, std::string>> edges;

    static CausalGraph morpho_mnist();

    std::vector<std::string> parents(const std::string& node) const;
    bool is_acyclic() const;
    // Attribute nodes only (no image), in a valid topological order.
    std::vector<std::string> attribute_order() const;
};

// Attribute targets for a do() intervention, in normalized units.
struct InterventionSpec {
    std::optional<double> thickness;
    std::optional<double> intensity;
    std::optional<double> slant;
    std::optional<int64_t> label;

    bool empty() const { return !thickness && !intensity && !slant && !label; }

    // Throws a spec error on names outside the graph.
    static InterventionSpec from_map(const std::map<std::string, double>& values,
                                     std::optional<int64_t> label = std::nullopt);
    // Parses "thickness=0.5,label=3".
    static InterventionSpec parse(const std::string& text);

    std::optional<double> continuous(int i) const;
};

// Invertible conditional location-scale transform for one continuous
// attribute: value = mu(parents) + exp(log_sigma(parents)) * noise.
// Parent-free mechanisms reduce to learnable (mu, log_sigma) scalars.
// All arithmetic is float64.
class MechanismImpl : public torch::nn::Module {
public:
    MechanismImpl(std::string target, std::vector<std::string> parents, int64_t hidden);

    // parents: [N,P] (P may be 0 -> pass [N,0]); returns {mu, sigma} each [N].
    std::pair<torch::Tensor, torch::Tensor> location_scale(const torch::Tensor& parents) const;
    torch::Tensor forward(const torch::Tensor& parents, const torch::Tensor& noise) const;
    torch::Tensor inverse(const torch::Tensor& parents, const torch::Tensor& value) const;
    // Mean negative log-likelihood of values given parents.
    torch::Tensor nll(const torch::Tensor& parents, const torch::Tensor& value) const;

    const std::string& target() const { return target_; }
    const std::vector<std::string>& parent_names() const { return parents_; }

private:
    std::string target_;
    std::vector<std::string> parents_;
    int64_t hidden_;
    torch::nn::Sequential conditioner_{nullptr};  // [N,P] -> [N,2]
    torch::Tensor base_;                          // used when parent-free
};

TORCH_MODULE(Mechanism);

struct ScmFitConfig {
    int64_t epochs = 800;
    double lr = 0.05;
    int64_t patience = 100;
    int64_t hidden = 16;  // 0 = affine conditioner
    uint64_t seed = 0;
    double holdout_fraction = 0.1;
};

struct AttributeNoise {
    double thickness;
    double intensity;
    double slant;
    int64_t label;  // exogenous category, passed through
};

// Causal graph plus fitted mechanisms for the non-image attributes.
// Supports abduction, intervention and counterfactual prediction. The label
// is exogenous: never recomputed, set directly by interventions. Immutable
// once fitted.
class AttributeScm {
public:
    // An unfitted SCM; every operation except fit/load throws on it.
    AttributeScm() = default;

    // Fits one mechanism per continuous attribute by maximum likelihood on a
    // normalized [N,3] attribute matrix. Throws a training error when the
    // loss fails to decrease over the patience window.
    static AttributeScm fit(const torch::Tensor& normalized_attributes, const CausalGraph& graph,
                            const ScmFitConfig& cfg = {});

    const CausalGraph& graph() const { return graph_; }

    AttributeNoise abduct(const AttributeVector& a_norm) const;
    AttributeVector forward(const AttributeNoise& noise) const;

    // Abduction-action-prediction in topological order. With propagate=false
    // non-intervened attributes keep their factual values (ablation mode).
    AttributeVector counterfactual(const AttributeVector& a_norm, const InterventionSpec& spec,
                                   bool propagate = true) const;

    // Batched counterfactuals: attrs [N,3] float64, labels [N] int64.
    std::pair<torch::Tensor, torch::Tensor> counterfactual_batch(const torch::Tensor& attrs,
                                                                 const torch::Tensor& labels,
                                                                 const InterventionSpec& spec,
                                                                 bool propagate = true) const;

    // Ancestral sampling; returns {attrs [n,3] float64, labels [n] int64}.
    // Deterministic in seed.
    std::pair<torch::Tensor, torch::Tensor> sample(int64_t n, uint64_t seed) const;

    double held_out_nll() const { return held_out_nll_; }
    // Abductions with |noise| above this bound log a warning and proceed.
    static constexpr double kSupportBound = 6.0;

    void save(const std::string& path) const;
    static AttributeScm load(const std::string& path);

    const Mechanism& mechanism(const std::string& name) const;

private:
    torch::Tensor parent_values(const std::string& target, const torch::Tensor& attrs) const;

    CausalGraph graph_;
    std::vector<Mechanism> mechanisms_;  // thickness, intensity, slant order
    double held_out_nll_ = 0.0;
    ScmFitConfig cfg_;
};

}  // namespace cgx
