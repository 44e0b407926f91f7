#include "cgx/cf_explainers.hpp"

#include <cmath>

namespace cgx {

namespace {

torch::Tensor tensor_row(const AttributeVector& a) {
    return torch::tensor({{float(a.thickness), float(a.intensity), float(a.slant)}},
                         torch::kFloat32);
}

// Margin max_{y' != t} s_{y'} - s_t per row, on pre-softmax scores.
torch::Tensor target_margin(const torch::Tensor& logits, const torch::Tensor& targets) {
    auto masked = logits.scatter(1, targets.unsqueeze(1),
                                 -std::numeric_limits<float>::infinity());
    auto best_other = std::get<0>(masked.max(1));
    auto target_score = logits.gather(1, targets.unsqueeze(1)).squeeze(1);
    return best_other - target_score;
}

}  // namespace

std::vector<CfExplanation> gradient_cf_batch(const CgmModel& model, const ClassifierHandle& f,
                                             const torch::Tensor& images, const torch::Tensor& attrs,
                                             const torch::Tensor& labels,
                                             const torch::Tensor& y_targets,
                                             const GradientCfConfig& cfg) {
    validate_image_batch(images);
    if (cfg.steps < 1) throw std::invalid_argument("gradient_cf: steps must be >= 1");
    const int64_t n = images.size(0);
    std::vector<CfExplanation> out(static_cast<size_t>(n));

    const int64_t chunk = 64;
    auto emb_matrix = model.embedding_matrix();
    for (int64_t start = 0; start < n; start += chunk) {
        const int64_t len = std::min(chunk, n - start);
        auto x = images.narrow(0, start, len);
        auto a = attrs.narrow(0, start, len).to(torch::kFloat32);
        auto l = labels.narrow(0, start, len);
        auto y_t = y_targets.narrow(0, start, len);
        auto z = model.encode(x, a, l).detach();

        // Logits of the label distribution: factual label starts at 2, rest 0.
        auto q = torch::zeros({len, kNumClasses});
        q.scatter_(1, l.unsqueeze(1), 2.0);
        q.requires_grad_(true);

        auto best_loss = torch::full({len}, std::numeric_limits<double>::infinity(), torch::kFloat64);
        auto best_p = torch::softmax(q.detach(), 1).clone();
        auto found = torch::zeros({len}, torch::kBool);
        auto last_p = best_p.clone();

        for (int64_t step = 0; step < cfg.steps; ++step) {
            auto p = torch::softmax(q, 1);
            auto emb = p.mm(emb_matrix);
            auto x_cf = model.generate_from_embedding(z, a, emb);
            auto margin = target_margin(f.logits(x_cf), y_t);
            if (cfg.hinge) margin = torch::relu(margin);
            auto l1 = (x_cf - x).abs().sum({1, 2, 3});
            auto per_image = cfg.lambda * margin + l1;
            auto q_grad = torch::autograd::grad({per_image.sum()}, {q})[0];

            torch::NoGradGuard ng;
            // Feasibility and best-iterate tracking before the update (the
            // tracked p produced this x_cf).
            auto p_now = torch::softmax(q, 1);
            last_p = p_now.clone();
            auto scores = torch::softmax(f.logits(x_cf.detach()), 1);
            auto loss_now = per_image.detach().to(torch::kFloat64);
            for (int64_t i = 0; i < len; ++i) {
                if (predict_class(scores[i]) != y_t[i].item<int64_t>()) continue;
                if (loss_now[i].item<double>() < best_loss[i].item<double>()) {
                    best_loss[i] = loss_now[i];
                    best_p[i] = p_now[i];
                    found[i] = true;
                }
            }
            if (!std::isfinite(per_image.sum().item<double>()))
                throw std::runtime_error("search error: non-finite gradient-cf loss");
            q -= cfg.lr * q_grad;
        }

        torch::NoGradGuard ng;
        for (int64_t i = 0; i < len; ++i) {
            CfExplanation& e = out[size_t(start + i)];
            e.observation_index = start + i;
            e.y = l[i].item<int64_t>();
            e.y_target = y_t[i].item<int64_t>();
            e.evaluations = cfg.steps;
            e.label_distribution = (found[i].item<bool>() ? best_p[i] : last_p[i]).clone();
            auto emb = e.label_distribution.unsqueeze(0).mm(emb_matrix);
            // Regenerate through the canonical single-observation path so the
            // stored artifact reproduces the returned image bitwise.
            auto z_i = model.encode(x.narrow(0, i, 1), a.narrow(0, i, 1), l.narrow(0, i, 1));
            e.counterfactual =
                model.generate_from_embedding(z_i, a.narrow(0, i, 1), emb).squeeze(0);
            e.achieved = predict_class(f, e.counterfactual);
            e.success = found[i].item<bool>() && e.achieved == e.y_target;
            e.best_loss = found[i].item<bool>() ? best_loss[i].item<double>()
                                                : std::numeric_limits<double>::quiet_NaN();
        }
    }
    return out;
}

CfExplanation gradient_cf(const CgmModel& model, const ClassifierHandle& f,
                          const torch::Tensor& image, const AttributeVector& a_norm,
                          int64_t y_target, const GradientCfConfig& cfg) {
    auto x = validate_image(image).unsqueeze(0);
    auto res = gradient_cf_batch(model, f, x, tensor_row(a_norm),
                                 torch::tensor({a_norm.label}, torch::kInt64),
                                 torch::tensor({y_target}, torch::kInt64), cfg);
    return res[0];
}

CfExplanation agnostic_cf(const CgmModel& model, const ClassifierHandle& f,
                          const torch::Tensor& image, const AttributeVector& a_norm,
                          int64_t y_target, const AgnosticCfConfig& cfg) {
    if (cfg.grid < 2) throw std::invalid_argument("agnostic_cf: grid must be >= 2");
    torch::NoGradGuard ng;
    auto x = validate_image(image).unsqueeze(0);
    auto attrs = tensor_row(a_norm);
    auto labels = torch::tensor({a_norm.label}, torch::kInt64);
    auto z = model.encode(x, attrs, labels);

    auto emb_matrix = model.embedding_matrix();
    const int64_t g = cfg.grid;
    torch::Tensor embs = torch::empty({g, model.embed_dim()});
    for (int64_t k = 0; k < g; ++k)
        embs[k] = interpolated_embedding(emb_matrix, a_norm.label, y_target,
                                         double(k) / double(g - 1));
    auto x_all = model.generate_from_embedding(z.expand({g, z.size(1)}),
                                               attrs.expand({g, kNumContinuous}), embs);
    auto scores = f.scores(x_all);

    CfExplanation e;
    e.y = a_norm.label;
    e.y_target = y_target;
    e.evaluations = g;
    int64_t hit = -1;
    for (int64_t k = 0; k < g; ++k) {
        if (predict_class(scores[k]) == y_target) {
            hit = k;
            break;
        }
    }
    const int64_t pick = hit >= 0 ? hit : g - 1;
    e.alpha = double(pick) / double(g - 1);
    e.counterfactual = x_all[pick];
    e.achieved = predict_class(scores[pick]);
    e.success = hit >= 0 && e.achieved == y_target;
    return e;
}

CfExplanation baseline_pixel_cf(const ClassifierHandle& f, const torch::Tensor& image,
                                const BaselinePixelCfConfig& cfg) {
    if (cfg.lambda_schedule.empty() || cfg.steps < 1)
        throw std::invalid_argument("baseline_pixel_cf: empty schedule or no steps");
    for (double l : cfg.lambda_schedule)
        if (l <= 0) throw std::invalid_argument("baseline_pixel_cf: lambda must be positive");
    auto x = validate_image(image).unsqueeze(0);
    const int64_t y = predict_class(f, x.squeeze(0));
    auto y_row = torch::tensor({y}, torch::kInt64);

    CfExplanation e;
    e.y = y;
    double best_l1 = std::numeric_limits<double>::infinity();
    torch::Tensor best_cf, last_cf = x.squeeze(0).clone();
    int64_t evals = 0;

    for (double lambda : cfg.lambda_schedule) {
        auto x_cf = x.clone().requires_grad_(true);
        for (int64_t step = 0; step < cfg.steps; ++step) {
            ++evals;
            // Untargeted: hinge on the factual-class margin.
            auto margin = -target_margin(f.logits(x_cf), y_row);  // f_y - best other
            auto loss = lambda * torch::relu(margin).sum() + (x_cf - x).abs().sum();
            auto g = torch::autograd::grad({loss}, {x_cf})[0];
            torch::NoGradGuard ng;
            x_cf -= cfg.lr * g;
            x_cf.clamp_(0.0, 1.0);
            auto cls = predict_class(f, x_cf[0]);
            if (cls != y) {
                double l1 = (x_cf - x).abs().sum().item<double>();
                if (l1 < best_l1) {
                    best_l1 = l1;
                    best_cf = x_cf[0].detach().clone();
                }
            }
        }
        {
            torch::NoGradGuard ng;
            last_cf = x_cf[0].detach().clone();
        }
        if (best_cf.defined()) break;  // flip found at the smallest lambda that works
    }
    e.evaluations = evals;
    if (best_cf.defined()) {
        e.counterfactual = best_cf;
        e.achieved = predict_class(f, best_cf);
        e.y_target = e.achieved;
        e.success = true;
        e.best_loss = best_l1;
    } else {
        e.counterfactual = last_cf;
        e.achieved = predict_class(f, last_cf);
        e.y_target = -1;  // no class change found within budget
        e.success = false;
    }
    return e;
}

}  // namespace cgx
