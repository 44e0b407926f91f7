#include "cgx/pixel_explainers.hpp"

#include <cmath>

namespace cgx {

SaliencyMap shapley_saliency(const PixelScoreFn& f, const torch::Tensor& image,
                             const torch::Tensor& background, int64_t n_samples, uint64_t seed) {
    if (background.dim() != 4 || background.size(0) == 0)
        throw std::invalid_argument("shapley_saliency: background must be a nonempty [B,1,28,28]");
    if (n_samples < 1) throw std::invalid_argument("shapley_saliency: n_samples must be >= 1");
    torch::Tensor x = image.dim() == 3 ? image.unsqueeze(0) : image;

    auto gen = at::detail::createCPUGenerator(seed);
    torch::Tensor maps = torch::zeros({kNumClasses, kImageSize, kImageSize});

    const int64_t chunk = 64;
    for (int64_t done = 0; done < n_samples; done += chunk) {
        int64_t len = std::min(chunk, n_samples - done);
        auto b_idx = torch::randint(0, background.size(0), {len}, gen, torch::kInt64);
        auto u = torch::rand({len, 1, 1, 1}, gen);
        auto x_b = background.index_select(0, b_idx);
        auto diff = x - x_b;  // broadcasts x over the chunk
        auto x_int = (x_b + u * diff).detach().requires_grad_(true);
        auto scores = f(x_int);
        for (int64_t k = 0; k < kNumClasses; ++k) {
            auto grads = torch::autograd::grad({scores.select(1, k).sum()}, {x_int},
                                               /*grad_outputs=*/{}, /*retain_graph=*/
                                               k + 1 < kNumClasses)[0];
            maps[k] += (diff * grads).sum(0).squeeze(0);
        }
    }
    maps /= double(n_samples);

    torch::NoGradGuard ng;
    torch::Tensor base = torch::zeros({kNumClasses}, torch::kFloat64);
    for (int64_t start = 0; start < background.size(0); start += 512) {
        int64_t len = std::min<int64_t>(512, background.size(0) - start);
        base += f(background.narrow(0, start, len)).to(torch::kFloat64).sum(0);
    }
    base /= double(background.size(0));
    return SaliencyMap{maps, base.to(torch::kFloat32)};
}

SaliencyMap shapley_saliency(const ClassifierHandle& f, const torch::Tensor& image,
                             const torch::Tensor& background, int64_t n_samples, uint64_t seed) {
    return shapley_saliency(
        [&f](const torch::Tensor& images) { return torch::softmax(f.logits(images), 1); }, image,
        background, n_samples, seed);
}

namespace {

struct ElasticSearchResult {
    torch::Tensor variable;  // best feasible delta / retained image
    bool success = false;
    torch::Tensor scores;    // classifier scores at the best iterate
};

// Projected gradient descent with iterative shrinkage on the elastic net,
// with the attack weight c tuned by bisection. `attack` must be the hinge
// margin loss of the smooth part; `feasible` checks the classification
// constraint exactly; `project` keeps the variable in its box.
template <typename AttackFn, typename FeasibleFn, typename ProjectFn>
ElasticSearchResult elastic_net_attack(const torch::Tensor& init, AttackFn attack,
                                       FeasibleFn feasible, ProjectFn project,
                                       const ContrastiveConfig& cfg) {
    double c = cfg.c_init, c_lo = 0.0, c_hi = -1.0;  // c_hi < 0 means unbounded
    ElasticSearchResult best;
    double best_net = std::numeric_limits<double>::infinity();

    for (int64_t round = 0; round < cfg.c_steps; ++round) {
        auto v = init.clone().requires_grad_(true);
        bool round_success = false;
        for (int64_t step = 0; step < cfg.steps; ++step) {
            auto smooth = c * attack(v) + v.pow(2).sum();
            auto g = torch::autograd::grad({smooth}, {v})[0];
            torch::NoGradGuard ng;
            v -= cfg.lr * g;
            // Soft threshold (L1 prox), then the box projection.
            v.copy_(v.sign() * (v.abs() - cfg.beta * cfg.lr).clamp_min(0.0));
            v.copy_(project(v));
            if (feasible(v)) {
                round_success = true;
                double net = (cfg.beta * v.abs().sum() + v.pow(2).sum()).item<double>();
                if (net < best_net) {
                    best_net = net;
                    best.variable = v.detach().clone();
                    best.success = true;
                }
            }
        }
        if (round_success) {
            c_hi = c;
            c = 0.5 * (c_lo + c_hi);
        } else {
            c_lo = c;
            c = c_hi < 0 ? c * 10.0 : 0.5 * (c_lo + c_hi);
        }
    }
    return best;
}

torch::Tensor single_scores(const ClassifierHandle& f, const torch::Tensor& image) {
    torch::NoGradGuard ng;
    return f.scores(image.unsqueeze(0)).squeeze(0);
}

}  // namespace

ContrastiveResult pertinent_negative(const ClassifierHandle& f, const torch::Tensor& image,
                                     const ContrastiveConfig& cfg) {
    torch::Tensor x = validate_image(image);
    ContrastiveResult out;
    out.scores_x = single_scores(f, x);
    const int64_t y = predict_class(out.scores_x);

    auto attack = [&](const torch::Tensor& delta) {
        // Margins on pre-softmax scores; softmax margins vanish once the
        // classifier saturates and leave the search without a gradient.
        auto scores = f.logits((x + delta).unsqueeze(0)).squeeze(0);
        auto others = torch::cat({scores.narrow(0, 0, y), scores.narrow(0, y + 1, kNumClasses - y - 1)});
        return torch::relu(scores[y] - others.max() + cfg.kappa);
    };
    auto feasible = [&](const torch::Tensor& delta) {
        torch::NoGradGuard ng;
        return predict_class(f, (x + delta).clamp(0, 1)) != y;
    };
    auto project = [&](const torch::Tensor& delta) {
        // Keep x + delta a valid image.
        return delta.clamp(-x, 1.0 - x);
    };
    auto res = elastic_net_attack(torch::zeros_like(x), attack, feasible, project, cfg);
    out.pn_success = res.success;
    out.pn_delta = res.success ? res.variable : torch::zeros_like(x);
    out.scores_pn = single_scores(f, (x + out.pn_delta).clamp(0, 1));
    return out;
}

ContrastiveResult pertinent_positive(const ClassifierHandle& f, const torch::Tensor& image,
                                     const ContrastiveConfig& cfg) {
    torch::Tensor x = validate_image(image);
    ContrastiveResult out;
    out.scores_x = single_scores(f, x);
    const int64_t y = predict_class(out.scores_x);

    auto attack = [&](const torch::Tensor& retained) {
        auto scores = f.logits(retained.unsqueeze(0)).squeeze(0);
        auto others = torch::cat({scores.narrow(0, 0, y), scores.narrow(0, y + 1, kNumClasses - y - 1)});
        return torch::relu(others.max() - scores[y] + cfg.kappa);
    };
    auto feasible = [&](const torch::Tensor& retained) {
        torch::NoGradGuard ng;
        return predict_class(f, retained) == y;
    };
    auto project = [&](const torch::Tensor& retained) { return retained.clamp(torch::zeros_like(x), x); };

    auto res = elastic_net_attack(x.clone(), attack, feasible, project, cfg);
    out.pp_success = res.success;
    out.pp_retained = res.success ? res.variable : x.clone();
    out.scores_pp = single_scores(f, out.pp_retained);
    return out;
}

ContrastiveResult contrastive_explain(const ClassifierHandle& f, const torch::Tensor& image,
                                      const ContrastiveConfig& cfg) {
    ContrastiveResult pn = pertinent_negative(f, image, cfg);
    ContrastiveResult pp = pertinent_positive(f, image, cfg);
    pn.pp_retained = pp.pp_retained;
    pn.pp_success = pp.pp_success;
    pn.scores_pp = pp.scores_pp;
    return pn;
}

SweepResult sweep_explain(const CgmModel& model, const AttributeScm& scm, const ClassifierHandle& f,
                          const torch::Tensor& image, const AttributeVector& a_norm,
                          const torch::Tensor& background, const SweepConfig& cfg) {
    if (cfg.values.empty()) throw std::invalid_argument("sweep_explain: empty value set");
    if (cfg.attribute < 0 || cfg.attribute >= kNumContinuous)
        throw std::invalid_argument("sweep_explain: attribute index out of range");
    torch::Tensor x = validate_image(image).unsqueeze(0);
    torch::Tensor attrs = torch::tensor({{a_norm.thickness, a_norm.intensity, a_norm.slant}},
                                        torch::kFloat32);
    torch::Tensor labels = torch::tensor({a_norm.label}, torch::kInt64);

    SweepResult result;
    result.latent = model.encode(x, attrs, labels);

    for (double v : cfg.values) {
        InterventionSpec spec;
        if (cfg.attribute == 0) spec.thickness = v;
        else if (cfg.attribute == 1) spec.intensity = v;
        else spec.slant = v;

        AttributeVector a_cf = scm.counterfactual(a_norm, spec, cfg.propagate);
        torch::Tensor cf_attrs = torch::tensor({{a_cf.thickness, a_cf.intensity, a_cf.slant}},
                                               torch::kFloat32);
        torch::Tensor cf;
        {
            torch::NoGradGuard ng;
            cf = model.generate(result.latent, cf_attrs, labels).squeeze(0);
        }
        SweepEntry entry;
        entry.value = v;
        entry.attributes = a_cf;
        entry.counterfactual = cf;
        entry.scores = single_scores(f, cf);
        if (cfg.explainer == SweepExplainer::Shapley) {
            entry.saliency = shapley_saliency(f, cf, background, cfg.shap_samples, cfg.seed);
        } else {
            entry.contrastive = contrastive_explain(f, cf, cfg.contrastive);
        }
        result.entries.push_back(std::move(entry));
    }
    return result;
}

}  // namespace cgx
