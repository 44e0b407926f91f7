#include "cgx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cgx {

namespace {

double squared_l2(const torch::Tensor& a, const torch::Tensor& b) {
    return (a.to(torch::kFloat64) - b.to(torch::kFloat64)).pow(2).sum().item<double>();
}

}  // namespace

double im1(const torch::Tensor& x_cf, const torch::Tensor& recon_p, const torch::Tensor& recon_q,
           double epsilon) {
    if (epsilon <= 0.0) throw std::invalid_argument("im1: epsilon must be positive");
    return squared_l2(x_cf, recon_q) / (squared_l2(x_cf, recon_p) + epsilon);
}

double im2(const torch::Tensor& x_cf, const torch::Tensor& recon_q, const torch::Tensor& recon_global,
           double epsilon) {
    if (epsilon <= 0.0) throw std::invalid_argument("im2: epsilon must be positive");
    double num = squared_l2(recon_q, recon_global);
    double den = x_cf.to(torch::kFloat64).abs().sum().item<double>() + epsilon;
    return num / den;
}

double oracle_score(const std::vector<int64_t>& f_classes, const std::vector<int64_t>& o_classes) {
    if (f_classes.empty()) throw std::invalid_argument("oracle_score: empty counterfactual set");
    if (f_classes.size() != o_classes.size())
        throw std::invalid_argument("oracle_score: prediction lists differ in length");
    int64_t agree = 0;
    for (size_t i = 0; i < f_classes.size(); ++i)
        if (f_classes[i] == o_classes[i]) ++agree;
    return double(agree) / double(f_classes.size());
}

double normal_quantile_two_sided(double level) {
    if (level <= 0.0 || level >= 1.0) throw std::invalid_argument("confidence level must be in (0,1)");
    // Acklam's rational approximation for the inverse normal CDF, then one
    // Halley refinement against std::erfc.
    const double p = 1.0 - (1.0 - level) / 2.0;
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01, -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
    return x;
}

MeanCi mean_ci(const std::vector<double>& values, double level) {
    if (values.size() < 2) throw std::invalid_argument("mean_ci: need at least 2 values");
    const double n = double(values.size());
    double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    double sd = std::sqrt(ss / (n - 1.0));
    double z = normal_quantile_two_sided(level);
    return MeanCi{mean, z * sd / std::sqrt(n), int64_t(values.size())};
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("spearman: need two equal-length series of >= 2 values");
    auto ranks = [](const std::vector<double>& v) {
        std::vector<size_t> order(v.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](size_t i, size_t j) { return v[i] < v[j]; });
        std::vector<double> r(v.size());
        size_t i = 0;
        while (i < order.size()) {
            size_t j = i;
            while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
            double avg = (double(i) + double(j)) / 2.0 + 1.0;
            for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    auto ra = ranks(a), rb = ranks(b);
    double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / double(ra.size());
    double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / double(rb.size());
    double num = 0, va = 0, vb = 0;
    for (size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0 || vb == 0) return 0.0;
    return num / std::sqrt(va * vb);
}

torch::Tensor binarize_image(const torch::Tensor& image, double threshold) {
    torch::Tensor img = image.squeeze().to(torch::kFloat64);
    if (img.dim() != 2) throw std::invalid_argument("binarize_image: expected one image");
    double mx = img.max().item<double>();
    if (mx <= 0.0) return torch::zeros_like(img, torch::kBool);
    return img >= threshold * mx;
}

torch::Tensor distance_transform(const torch::Tensor& mask) {
    // Exact Euclidean distance to the nearest background pixel; brute force
    // is fine at 28x28.
    auto m = mask.to(torch::kBool);
    const int64_t H = m.size(0), W = m.size(1);
    std::vector<std::pair<int64_t, int64_t>> background;
    auto acc = m.accessor<bool, 2>();
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            if (!acc[y][x]) background.emplace_back(y, x);
    torch::Tensor out = torch::zeros({H, W}, torch::kFloat64);
    auto oacc = out.accessor<double, 2>();
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            if (!acc[y][x]) continue;
            double best = 1e18;
            for (auto [by, bx] : background) {
                double dy = double(y - by), dx = double(x - bx);
                best = std::min(best, dy * dy + dx * dx);
            }
            // Border rule: distance to the image edge also counts.
            double edge = double(std::min({y + 1, x + 1, H - y, W - x}));
            oacc[y][x] = std::min(std::sqrt(best), edge);
        }
    return out;
}

torch::Tensor skeletonize(const torch::Tensor& mask) {
    // Zhang-Suen thinning.
    auto m = mask.to(torch::kUInt8).clone();
    const int64_t H = m.size(0), W = m.size(1);
    auto at = [&](const torch::TensorAccessor<uint8_t, 2>& a, int64_t y, int64_t x) -> uint8_t {
        if (y < 0 || y >= H || x < 0 || x >= W) return 0;
        return a[y][x];
    };
    bool changed = true;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            auto a = m.accessor<uint8_t, 2>();
            std::vector<std::pair<int64_t, int64_t>> to_clear;
            for (int64_t y = 0; y < H; ++y) {
                for (int64_t x = 0; x < W; ++x) {
                    if (!a[y][x]) continue;
                    uint8_t p2 = at(a, y - 1, x), p3 = at(a, y - 1, x + 1), p4 = at(a, y, x + 1),
                            p5 = at(a, y + 1, x + 1), p6 = at(a, y + 1, x), p7 = at(a, y + 1, x - 1),
                            p8 = at(a, y, x - 1), p9 = at(a, y - 1, x - 1);
                    int bsum = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9;
                    if (bsum < 2 || bsum > 6) continue;
                    int transitions = int(!p2 && p3) + int(!p3 && p4) + int(!p4 && p5) +
                                      int(!p5 && p6) + int(!p6 && p7) + int(!p7 && p8) +
                                      int(!p8 && p9) + int(!p9 && p2);
                    if (transitions != 1) continue;
                    if (pass == 0) {
                        if (p2 && p4 && p6) continue;
                        if (p4 && p6 && p8) continue;
                    } else {
                        if (p2 && p4 && p8) continue;
                        if (p2 && p6 && p8) continue;
                    }
                    to_clear.emplace_back(y, x);
                }
            }
            if (!to_clear.empty()) changed = true;
            auto wacc = m.accessor<uint8_t, 2>();
            for (auto [y, x] : to_clear) wacc[y][x] = 0;
        }
    }
    return m.to(torch::kBool);
}

std::optional<Morphometrics> morphometrics(const torch::Tensor& image, double threshold) {
    torch::Tensor img = image.squeeze().to(torch::kFloat64);
    if (img.dim() != 2 || img.size(0) != kImageSize || img.size(1) != kImageSize)
        throw std::invalid_argument("morphometrics: expected a single 28x28 image");
    torch::Tensor mask = binarize_image(img, threshold);
    const int64_t support = mask.sum().item<int64_t>();
    if (support == 0) return std::nullopt;

    // Intensity: median of the original pixels over the binarized support.
    torch::Tensor vals = img.masked_select(mask);
    double intensity = std::get<0>(vals.median(0)).item<double>() * 255.0;

    // Thickness: 2x mean distance-transform value over the skeleton.
    torch::Tensor dist = distance_transform(mask);
    torch::Tensor skel = skeletonize(mask);
    double thickness;
    if (skel.sum().item<int64_t>() == 0) {
        thickness = 2.0 * dist.max().item<double>();
    } else {
        thickness = 2.0 * dist.masked_select(skel).mean().item<double>();
    }

    // Slant: shear coefficient from centered second moments.
    auto macc = mask.accessor<bool, 2>();
    double sx = 0, sy = 0, n = 0;
    for (int64_t y = 0; y < kImageSize; ++y)
        for (int64_t x = 0; x < kImageSize; ++x)
            if (macc[y][x]) {
                sx += double(x);
                sy += double(y);
                n += 1;
            }
    double cx = sx / n, cy = sy / n;
    double mu11 = 0, mu02 = 0;
    for (int64_t y = 0; y < kImageSize; ++y)
        for (int64_t x = 0; x < kImageSize; ++x)
            if (macc[y][x]) {
                mu11 += (double(x) - cx) * (double(y) - cy);
                mu02 += (double(y) - cy) * (double(y) - cy);
            }
    double slant = mu02 > 0 ? std::atan(-mu11 / mu02) : 0.0;
    return Morphometrics{thickness, intensity, slant};
}

}  // namespace cgx
