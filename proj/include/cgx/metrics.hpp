#pragma once

#include "cgx/types.hpp"

#include <torch/torch.h>

#include <optional>
#include <vector>

namespace cgx {

// Interpretability metric: squared-error ratio between reconstructions from
// the target-class and source-class autoencoders. Below 1 means the
// counterfactual sits closer to the target class. Computed in float64.
double im1(const torch::Tensor& x_cf, const torch::Tensor& recon_p, const torch::Tensor& recon_q,
           double epsilon = 1e-8);

// Disagreement between the target-class and global autoencoder
// reconstructions, normalized by the counterfactual's L1 mass.
double im2(const torch::Tensor& x_cf, const torch::Tensor& recon_q, const torch::Tensor& recon_global,
           double epsilon = 1e-8);

// Fraction of counterfactuals on which two classifiers' argmax classes agree.
// Both argument vectors hold predicted class indices, one per counterfactual.
double oracle_score(const std::vector<int64_t>& f_classes, const std::vector<int64_t>& o_classes);

struct MeanCi {
    double mean;
    double half_width;
    int64_t n;
};

// Normal-approximation interval: mean +/- z_level * s / sqrt(n) with the
// sample standard deviation s. Requires n >= 2.
MeanCi mean_ci(const std::vector<double>& values, double level = 0.95);

// Two-sided standard-normal quantile used by mean_ci, accurate to ~1 ulp.
double normal_quantile_two_sided(double level);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct Morphometrics {
    double thickness;  // pixels
    double intensity;  // 8-bit units
    double slant;      // radians
};

// Measures stroke thickness (2x mean distance-transform value over the
// skeleton), brightness intensity (median of binarized-support pixels, 8-bit)
// and shear slant (from second-order moments). The binarization threshold is
// a fraction of the image maximum (Morpho-MNIST convention). Returns nullopt
// when the binarized image is empty.
std::optional<Morphometrics> morphometrics(const torch::Tensor& image, double threshold = 0.5);

// Exposed for tests: binary mask, Zhang-Suen skeleton, Euclidean distance
// transform on 28x28 grids.
torch::Tensor binarize_image(const torch::Tensor& image, double threshold);
torch::Tensor skeletonize(const torch::Tensor& mask);
torch::Tensor distance_transform(const torch::Tensor& mask);

}  // namespace cgx
