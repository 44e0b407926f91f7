#pragma once

#include "cgx/cgm.hpp"
#include "cgx/classifiers.hpp"
#include "cgx/types.hpp"

#include <torch/torch.h>

#include <vector>

namespace cgx {

struct GradientCfConfig {
    double lambda = 10.0;  // margin/proximity trade-off, fixed (no search)
    int64_t steps = 300;
    double lr = 0.05;
    bool hinge = false;  // hinged margin variant of the loss
};

struct AgnosticCfConfig {
    int64_t grid = 100;  // alpha grid resolution
};

struct BaselinePixelCfConfig {
    std::vector<double> lambda_schedule = {0.5, 1, 2, 4, 8, 16, 32, 64};
    int64_t steps = 150;
    double lr = 0.05;
};

// A counterfactual explanation: the image, the search artifact that produced
// it (label distribution p or interpolation alpha), and bookkeeping. Failure
// is data, not an exception: success <=> achieved == y_target.
struct CfExplanation {
    torch::Tensor counterfactual;  // [1,28,28]
    int64_t observation_index = -1;
    int64_t y = -1;         // factual class
    int64_t y_target = -1;
    int64_t achieved = -1;  // predict_class of the counterfactual
    bool success = false;
    int64_t evaluations = 0;
    torch::Tensor label_distribution;  // [10]; gradient method only
    double alpha = std::numeric_limits<double>::quiet_NaN();  // agnostic method only
    double best_loss = std::numeric_limits<double>::quiet_NaN();
};

// Gradient-based counterfactual search over the label distribution: the
// logits of p are optimized by gradient descent on
//   lambda (max_{y' != y_t} f_{y'}(x'(a')) - f_{y_t}(x'(a'))) + ||x'(a') - x||_1
// where x'(a') = G(E(x,a), a with expected embedding of p). Continuous
// attributes stay at their factual values; the latent is computed once and
// frozen. Returns the best iterate by loss among those achieving y_t.
CfExplanation gradient_cf(const CgmModel& model, const ClassifierHandle& f,
                          const torch::Tensor& image, const AttributeVector& a_norm, int64_t y_target,
                          const GradientCfConfig& cfg = {});

// Batched variant (one Adam-free gradient descent per image, run jointly).
std::vector<CfExplanation> gradient_cf_batch(const CgmModel& model, const ClassifierHandle& f,
                                             const torch::Tensor& images, const torch::Tensor& attrs,
                                             const torch::Tensor& labels,
                                             const torch::Tensor& y_targets,
                                             const GradientCfConfig& cfg = {});

// Model-agnostic linear search: walks the interpolated embedding
// e_alpha = alpha e(y_t) + (1-alpha) e(y) over the uniform grid
// {k/(grid-1)} in ascending order and returns the first alpha whose
// counterfactual is classified y_t. Uses predict_class only.
CfExplanation agnostic_cf(const CgmModel& model, const ClassifierHandle& f,
                          const torch::Tensor& image, const AttributeVector& a_norm, int64_t y_target,
                          const AgnosticCfConfig& cfg = {});

// Untargeted pixel-space baseline: gradient descent on
//   lambda H(f_y(x') - max_{y' != y} f_{y'}(x')) + ||x' - x||_1
// with x' clipped to [0,1] and lambda raised on an outer schedule until the
// class flips; returns the flipped image of smallest L1 distance. On
// success y_target records the achieved class.
CfExplanation baseline_pixel_cf(const ClassifierHandle& f, const torch::Tensor& image,
                                const BaselinePixelCfConfig& cfg = {});

}  // namespace cgx
