#include "cgx/scm.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <sstream>

namespace cgx {

namespace {

int continuous_index(const std::string& name) {
    for (int i = 0; i < kNumContinuous; ++i)
        if (kContinuousNames[size_t(i)] == name) return i;
    return -1;
}

}  // namespace

CausalGraph CausalGraph::morpho_mnist() {
    CausalGraph g;
    g.nodes = {"thickness", "intensity", "slant", "label", "image"};
    g.edges = {{"thickness", "intensity"},
               {"thickness", "image"},
               {"intensity", "image"},
               {"slant", "image"},
               {"label", "image"}};
    return g;
}

std::vector<std::string> CausalGraph::parents(const std::string& node) const {
    std::vector<std::string> out;
    for (const auto& [from, to] : edges)
        if (to == node) out.push_back(from);
    return out;
}

bool CausalGraph::is_acyclic() const {
    // Kahn's algorithm.
    std::map<std::string, int> indeg;
    for (const auto& n : nodes) indeg[n] = 0;
    for (const auto& [from, to] : edges) indeg[to]++;
    std::vector<std::string> queue;
    for (const auto& [n, d] : indeg)
        if (d == 0) queue.push_back(n);
    size_t seen = 0;
    while (!queue.empty()) {
        auto n = queue.back();
        queue.pop_back();
        ++seen;
        for (const auto& [from, to] : edges)
            if (from == n && --indeg[to] == 0) queue.push_back(to);
    }
    return seen == nodes.size();
}

std::vector<std::string> CausalGraph::attribute_order() const {
    std::vector<std::string> order;
    std::set<std::string> placed;
    while (order.size() + 1 < nodes.size()) {
        for (const auto& n : nodes) {
            if (n == "image" || placed.count(n)) continue;
            auto ps = parents(n);
            bool ready = std::all_of(ps.begin(), ps.end(),
                                     [&](const std::string& p) { return placed.count(p) > 0; });
            if (ready) {
                order.push_back(n);
                placed.insert(n);
            }
        }
    }
    return order;
}

InterventionSpec InterventionSpec::from_map(const std::map<std::string, double>& values,
                                            std::optional<int64_t> label) {
    InterventionSpec spec;
    spec.label = label;
    for (const auto& [name, v] : values) {
        if (name == "thickness") spec.thickness = v;
        else if (name == "intensity") spec.intensity = v;
        else if (name == "slant") spec.slant = v;
        else if (name == "label") spec.label = int64_t(llround(v));
        else throw std::invalid_argument("spec error: unknown attribute '" + name + "'");
    }
    return spec;
}

InterventionSpec InterventionSpec::parse(const std::string& text) {
    std::map<std::string, double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        auto eq = item.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("spec error: expected name=value, got '" + item + "'");
        values[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
    }
    return from_map(values);
}

std::optional<double> InterventionSpec::continuous(int i) const {
    switch (i) {
        case 0: return thickness;
        case 1: return intensity;
        case 2: return slant;
    }
    throw std::out_of_range("InterventionSpec: continuous index");
}

MechanismImpl::MechanismImpl(std::string target, std::vector<std::string> parents, int64_t hidden)
    : target_(std::move(target)), parents_(std::move(parents)), hidden_(hidden) {
    auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    if (parents_.empty()) {
        base_ = register_parameter("base", torch::zeros({2}, opts));
    } else if (hidden_ == 0) {
        torch::nn::Sequential net(torch::nn::Linear(int64_t(parents_.size()), 2));
        conditioner_ = register_module("conditioner", net);
        conditioner_->to(torch::kFloat64);
    } else {
        torch::nn::Sequential net(torch::nn::Linear(int64_t(parents_.size()), hidden_),
                                  torch::nn::Tanh(), torch::nn::Linear(hidden_, 2));
        conditioner_ = register_module("conditioner", net);
        conditioner_->to(torch::kFloat64);
    }
}

std::pair<torch::Tensor, torch::Tensor> MechanismImpl::location_scale(
    const torch::Tensor& parents) const {
    torch::Tensor out;
    if (parents_.empty()) {
        int64_t n = parents.defined() && parents.dim() > 0 ? parents.size(0) : 1;
        out = base_.unsqueeze(0).expand({n, 2});
    } else {
        out = const_cast<MechanismImpl*>(this)->conditioner_->forward(parents.to(torch::kFloat64));
    }
    auto mu = out.select(1, 0);
    auto sigma = out.select(1, 1).clamp(-7.0, 7.0).exp();
    return {mu, sigma};
}

torch::Tensor MechanismImpl::forward(const torch::Tensor& parents, const torch::Tensor& noise) const {
    auto [mu, sigma] = location_scale(parents);
    return mu + sigma * noise.to(torch::kFloat64);
}

torch::Tensor MechanismImpl::inverse(const torch::Tensor& parents, const torch::Tensor& value) const {
    auto [mu, sigma] = location_scale(parents);
    return (value.to(torch::kFloat64) - mu) / sigma;
}

torch::Tensor MechanismImpl::nll(const torch::Tensor& parents, const torch::Tensor& value) const {
    auto [mu, sigma] = location_scale(parents);
    auto z = (value.to(torch::kFloat64) - mu) / sigma;
    return (sigma.log() + 0.5 * z * z).mean() + 0.5 * std::log(2.0 * M_PI);
}

torch::Tensor AttributeScm::parent_values(const std::string& target,
                                          const torch::Tensor& attrs) const {
    auto parents = graph_.parents(target);
    std::vector<torch::Tensor> cols;
    for (const auto& p : parents) {
        int idx = continuous_index(p);
        if (idx < 0) throw std::runtime_error("mechanism parent must be continuous: " + p);
        cols.push_back(attrs.select(1, idx).unsqueeze(1));
    }
    if (cols.empty()) return torch::empty({attrs.size(0), 0}, torch::kFloat64);
    return torch::cat(cols, 1);
}

const Mechanism& AttributeScm::mechanism(const std::string& name) const {
    for (const auto& m : mechanisms_)
        if (m->target() == name) return m;
    throw std::runtime_error("no mechanism for " + name);
}

AttributeScm AttributeScm::fit(const torch::Tensor& normalized_attributes, const CausalGraph& graph,
                               const ScmFitConfig& cfg) {
    if (normalized_attributes.dim() != 2 || normalized_attributes.size(1) != kNumContinuous)
        throw std::invalid_argument("fit: expected [N,3] normalized attribute matrix");
    if (!graph.is_acyclic()) throw std::invalid_argument("fit: graph has a cycle");
    torch::Tensor attrs = normalized_attributes.to(torch::kFloat64);
    const int64_t n = attrs.size(0);
    if (n < 4) throw std::invalid_argument("fit: need at least 4 rows");

    torch::manual_seed(cfg.seed);
    AttributeScm scm;
    scm.graph_ = graph;
    scm.cfg_ = cfg;

    const int64_t n_hold = std::max<int64_t>(1, int64_t(std::llround(cfg.holdout_fraction * double(n))));
    torch::Tensor train = attrs.narrow(0, 0, n - n_hold);
    torch::Tensor hold = attrs.narrow(0, n - n_hold, n_hold);

    double hold_total = 0.0;
    for (const auto& name : graph.attribute_order()) {
        if (name == "label") continue;  // exogenous, uniform prior
        auto parents = graph.parents(name);
        Mechanism mech(name, parents, parents.empty() ? 0 : cfg.hidden);
        int idx = continuous_index(name);
        torch::Tensor target = train.select(1, idx);
        torch::Tensor parent_mat = scm.parent_values(name, train);

        torch::optim::Adam opt(mech->parameters(), torch::optim::AdamOptions(cfg.lr));
        double initial = mech->nll(parent_mat, target).item<double>();
        double best = initial;
        int64_t since_best = 0;
        for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            opt.zero_grad();
            auto loss = mech->nll(parent_mat, target);
            loss.backward();
            opt.step();
            double lv = loss.item<double>();
            if (!std::isfinite(lv))
                throw std::runtime_error("training error: non-finite loss fitting mechanism " + name);
            if (lv < best - 1e-9) {
                best = lv;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;  // plateau
            }
        }
        if (!(best < initial - 1e-9))
            throw std::runtime_error("training error: loss for mechanism '" + name +
                                     "' did not decrease (initial " + std::to_string(initial) +
                                     ", best " + std::to_string(best) + ")");
        torch::NoGradGuard ng;
        double hold_nll =
            mech->nll(scm.parent_values(name, hold), hold.select(1, idx)).item<double>();
        if (!std::isfinite(hold_nll))
            throw std::runtime_error("training error: non-finite held-out likelihood for " + name);
        hold_total += hold_nll;
        scm.mechanisms_.push_back(std::move(mech));
    }
    scm.held_out_nll_ = hold_total;
    return scm;
}

AttributeNoise AttributeScm::abduct(const AttributeVector& a_norm) const {
    torch::NoGradGuard ng;
    torch::Tensor attrs = torch::tensor({{a_norm.thickness, a_norm.intensity, a_norm.slant}},
                                        torch::kFloat64);
    AttributeNoise noise{0, 0, 0, a_norm.label};
    for (const auto& m : mechanisms_) {
        int idx = continuous_index(m->target());
        torch::Tensor eps = m->inverse(parent_values(m->target(), attrs), attrs.select(1, idx));
        double e = eps.item<double>();
        if (!std::isfinite(e))
            throw std::runtime_error("abduction error: non-finite noise for " + m->target());
        if (std::abs(e) > kSupportBound)
            std::cerr << "[cgx] warning: abducted noise for " << m->target() << " is " << e
                      << " (outside +/-" << kSupportBound << "), proceeding\n";
        if (idx == 0) noise.thickness = e;
        else if (idx == 1) noise.intensity = e;
        else noise.slant = e;
    }
    return noise;
}

AttributeVector AttributeScm::forward(const AttributeNoise& noise) const {
    torch::NoGradGuard ng;
    torch::Tensor attrs = torch::zeros({1, kNumContinuous}, torch::kFloat64);
    for (const auto& name : graph_.attribute_order()) {
        if (name == "label") continue;
        int idx = continuous_index(name);
        double eps = idx == 0 ? noise.thickness : (idx == 1 ? noise.intensity : noise.slant);
        torch::Tensor v = mechanism(name)->forward(parent_values(name, attrs),
                                                   torch::tensor({eps}, torch::kFloat64));
        attrs.index_put_({0, idx}, v[0]);
    }
    AttributeVector out;
    out.thickness = attrs[0][0].item<double>();
    out.intensity = attrs[0][1].item<double>();
    out.slant = attrs[0][2].item<double>();
    out.label = noise.label;
    return out;
}

AttributeVector AttributeScm::counterfactual(const AttributeVector& a_norm,
                                             const InterventionSpec& spec, bool propagate) const {
    torch::Tensor attrs = torch::tensor({{a_norm.thickness, a_norm.intensity, a_norm.slant}},
                                        torch::kFloat64);
    torch::Tensor labels = torch::tensor({a_norm.label}, torch::kInt64);
    auto [cf_attrs, cf_labels] = counterfactual_batch(attrs, labels, spec, propagate);
    AttributeVector out;
    out.thickness = cf_attrs[0][0].item<double>();
    out.intensity = cf_attrs[0][1].item<double>();
    out.slant = cf_attrs[0][2].item<double>();
    out.label = cf_labels[0].item<int64_t>();
    return out;
}

std::pair<torch::Tensor, torch::Tensor> AttributeScm::counterfactual_batch(
    const torch::Tensor& attrs, const torch::Tensor& labels, const InterventionSpec& spec,
    bool propagate) const {
    torch::NoGradGuard ng;
    torch::Tensor a = attrs.to(torch::kFloat64);
    if (a.dim() != 2 || a.size(1) != kNumContinuous)
        throw std::invalid_argument("counterfactual_batch: expected [N,3] attributes");

    // Abduction: recover noise under the factual parents.
    std::map<std::string, torch::Tensor> noise;
    for (const auto& m : mechanisms_) {
        int idx = continuous_index(m->target());
        noise[m->target()] = m->inverse(parent_values(m->target(), a), a.select(1, idx));
    }

    // Which attributes have an intervened ancestor (and so must be
    // recomputed when propagating)?
    std::set<std::string> touched;
    for (int i = 0; i < kNumContinuous; ++i)
        if (spec.continuous(i)) touched.insert(kContinuousNames[size_t(i)]);
    bool grew = true;
    while (grew) {
        grew = false;
        for (const auto& [from, to] : graph_.edges)
            if (to != "image" && touched.count(from) && !touched.count(to))
                touched.insert(to), grew = true;
    }

    // Action + prediction in topological order.
    torch::Tensor out = a.clone();
    for (const auto& name : graph_.attribute_order()) {
        if (name == "label") continue;
        int idx = continuous_index(name);
        if (auto v = spec.continuous(idx)) {
            out.select(1, idx).fill_(*v);
        } else if (propagate && touched.count(name)) {
            torch::Tensor recomputed =
                mechanism(name)->forward(parent_values(name, out), noise[name]);
            out.select(1, idx).copy_(recomputed);
        }
        // No intervened ancestor: factual value stays (identity on the rest).
    }
    torch::Tensor out_labels = labels.clone();
    if (spec.label) {
        if (*spec.label < 0 || *spec.label >= kNumClasses)
            throw std::invalid_argument("spec error: label out of [0,9]");
        out_labels.fill_(*spec.label);
    }
    return {out, out_labels};
}

std::pair<torch::Tensor, torch::Tensor> AttributeScm::sample(int64_t n, uint64_t seed) const {
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    torch::NoGradGuard ng;
    auto gen = at::detail::createCPUGenerator(seed);
    torch::Tensor attrs = torch::zeros({n, kNumContinuous}, torch::kFloat64);
    for (const auto& name : graph_.attribute_order()) {
        if (name == "label") continue;
        int idx = continuous_index(name);
        torch::Tensor eps = torch::randn({n}, gen, torch::kFloat64);
        attrs.select(1, idx).copy_(mechanism(name)->forward(parent_values(name, attrs), eps));
    }
    torch::Tensor labels = torch::randint(0, kNumClasses, {n}, gen, torch::kInt64);
    return {attrs, labels};
}

void AttributeScm::save(const std::string& path) const {
    Checkpoint ckpt;
    ckpt.meta["kind"] = "attribute-scm";
    ckpt.meta["hidden"] = cfg_.hidden;
    ckpt.meta["seed"] = cfg_.seed;
    ckpt.meta["held_out_nll"] = held_out_nll_;
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [from, to] : graph_.edges) edges.push_back({from, to});
    ckpt.meta["edges"] = edges;
    for (const auto& m : mechanisms_) ckpt.put_module("mechanism." + m->target(), *m);
    ckpt.save(path);
}

AttributeScm AttributeScm::load(const std::string& path) {
    Checkpoint ckpt = Checkpoint::load(path);
    if (ckpt.meta.value("kind", "") != "attribute-scm")
        throw std::runtime_error("not an attribute-scm checkpoint: " + path);
    AttributeScm scm;
    scm.graph_ = CausalGraph::morpho_mnist();
    scm.cfg_.hidden = ckpt.meta.value("hidden", int64_t(16));
    scm.held_out_nll_ = ckpt.meta.value("held_out_nll", 0.0);
    for (const auto& name : scm.graph_.attribute_order()) {
        if (name == "label") continue;
        auto parents = scm.graph_.parents(name);
        Mechanism mech(name, parents, parents.empty() ? 0 : scm.cfg_.hidden);
        ckpt.load_module("mechanism." + name, *mech);
        scm.mechanisms_.push_back(std::move(mech));
    }
    return scm;
}

}  // namespace cgx
