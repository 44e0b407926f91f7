#include "cgx/attribute_explainer.hpp"

#include <algorithm>
#include <cmath>

namespace cgx {

McAttributeClassifier::McAttributeClassifier(CgmHandle model, ClassifierHandle f,
                                             const McConfig& cfg)
    : model_(std::move(model)), f_(std::move(f)), cfg_(cfg) {
    if (cfg_.m < 1) throw std::invalid_argument("McConfig: m must be >= 1");
    auto gen = at::detail::createCPUGenerator(cfg_.seed);
    latents_ = torch::randn({cfg_.m, model_->latent_dim()}, gen);
}

torch::Tensor McAttributeClassifier::scores(const torch::Tensor& attrs,
                                            const torch::Tensor& labels) const {
    torch::NoGradGuard ng;
    if (attrs.dim() != 2 || attrs.size(1) != kNumContinuous)
        throw std::invalid_argument("scores: expected [N,3] attributes");
    const int64_t n = attrs.size(0);
    const int64_t m = cfg_.m;
    // Tile: for every attribute row evaluate all m frozen latents at once.
    auto a_rep = attrs.to(torch::kFloat32).repeat_interleave(m, 0);
    auto l_rep = labels.repeat_interleave(m, 0);
    auto z_rep = latents_.repeat({n, 1});
    torch::Tensor scores = torch::empty({n * m, kNumClasses});
    for (int64_t start = 0; start < n * m; start += 1024) {
        int64_t len = std::min<int64_t>(1024, n * m - start);
        auto imgs = model_->generate(z_rep.narrow(0, start, len), a_rep.narrow(0, start, len),
                                     l_rep.narrow(0, start, len));
        scores.narrow(0, start, len) = f_.scores(imgs);
    }
    return scores.view({n, m, kNumClasses}).mean(1);
}

AttributeExplanation attribute_shapley(const McAttributeClassifier& f_hat,
                                       const AttributeVector& a_norm,
                                       const torch::Tensor& background) {
    return attribute_shapley(
        [&f_hat](const torch::Tensor& attrs, const torch::Tensor& labels) {
            return f_hat.scores(attrs, labels);
        },
        a_norm, background);
}

AttributeExplanation attribute_shapley(const AttributeScoreFn& f_hat, const AttributeVector& a_norm,
                                       const torch::Tensor& background) {
    if (background.dim() != 2 || background.size(1) != kNumContinuous || background.size(0) == 0)
        throw std::invalid_argument("background error: expected nonempty [B,3] attribute matrix");
    const int64_t n_bg = background.size(0);
    const int n_attr = kNumContinuous;
    const int n_coalitions = 1 << n_attr;

    torch::Tensor a = torch::tensor({a_norm.thickness, a_norm.intensity, a_norm.slant},
                                    torch::kFloat32);
    torch::Tensor bg = background.to(torch::kFloat32);

    // One batch: every coalition mixed with every background row. The label
    // is conditioning context, not an explained attribute.
    torch::Tensor rows = torch::empty({n_coalitions * n_bg, n_attr});
    for (int s = 0; s < n_coalitions; ++s) {
        auto block = rows.narrow(0, s * n_bg, n_bg);
        block.copy_(bg);
        for (int i = 0; i < n_attr; ++i)
            if (s & (1 << i)) block.select(1, i).fill_(a[i].item<float>());
    }
    torch::Tensor labels = torch::full({n_coalitions * n_bg}, a_norm.label, torch::kInt64);
    torch::Tensor values =
        f_hat(rows, labels).to(torch::kFloat64).view({n_coalitions, n_bg, kNumClasses}).mean(1);

    // phi_i = sum_{S not containing i} |S|!(d-|S|-1)!/d! (v(S+i) - v(S)).
    static const double fact[4] = {1, 1, 2, 6};
    torch::Tensor phi = torch::zeros({kNumClasses, n_attr}, torch::kFloat64);
    for (int s = 0; s < n_coalitions; ++s) {
        int size = __builtin_popcount(unsigned(s));
        for (int i = 0; i < n_attr; ++i) {
            if (s & (1 << i)) continue;
            double w = fact[size] * fact[n_attr - size - 1] / fact[n_attr];
            phi.select(1, i) += w * (values[s | (1 << i)] - values[s]);
        }
    }
    AttributeExplanation out;
    out.phi = phi;
    out.base = values[0];
    out.attributes = a_norm;
    return out;
}

torch::Tensor local_importance(const AttributeExplanation& explanation) {
    return explanation.phi.abs().mean(0);
}

GlobalImportance global_importance(const std::vector<AttributeExplanation>& explanations,
                                   const std::vector<int64_t>& class_labels) {
    if (explanations.size() != class_labels.size())
        throw std::invalid_argument("global_importance: explanation/label count mismatch");
    if (explanations.empty()) throw std::invalid_argument("global_importance: no explanations");
    GlobalImportance out;
    out.per_class = torch::full({kNumClasses, kNumContinuous},
                                std::numeric_limits<double>::quiet_NaN(), torch::kFloat64);
    out.counts = torch::zeros({kNumClasses}, torch::kInt64);
    for (int64_t k = 0; k < kNumClasses; ++k) {
        std::vector<std::vector<double>> per_attr(kNumContinuous);
        for (size_t i = 0; i < explanations.size(); ++i) {
            if (class_labels[i] != k) continue;
            auto imp = local_importance(explanations[i]).to(torch::kFloat64);
            for (int jj = 0; jj < kNumContinuous; ++jj)
                per_attr[size_t(jj)].push_back(imp[jj].item<double>());
        }
        out.counts[k] = int64_t(per_attr[0].size());
        if (per_attr[0].empty()) continue;  // flagged absent via count 0 + NaN
        for (int jj = 0; jj < kNumContinuous; ++jj) {
            auto& v = per_attr[size_t(jj)];
            std::sort(v.begin(), v.end());
            size_t n = v.size();
            double median = n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
            out.per_class.index_put_({k, jj}, median);
        }
    }
    return out;
}

}  // namespace cgx
