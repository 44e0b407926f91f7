#include "cgx/experiments.hpp"

#include "cgx/npy.hpp"
#include "cgx/sha256.hpp"
#include "cgx/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace fs = std::filesystem;

namespace cgx {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

ClassifierConfig classifier_config(const Config& cfg) {
    ClassifierConfig c;
    c.channels = cfg.get_int("clf.channels", 16);
    c.epochs = cfg.get_int("clf.epochs", 6);
    c.batch = cfg.get_int("clf.batch", 128);
    c.lr = cfg.get_double("clf.lr", 1e-3);
    c.accuracy_gate = cfg.get_double("clf.accuracy_gate", 0.95);
    return c;
}

CgmConfig cgm_config(const Config& cfg, const std::string& kind) {
    CgmConfig c;
    c.d_z = cfg.get_int("cgm.d_z", 64);
    c.d_e = cfg.get_int("cgm.d_e", 16);
    c.channels = cfg.get_int("cgm.channels", 16);
    c.epochs = cfg.get_int("cgm.epochs", 30);
    c.batch = cfg.get_int("cgm.batch", 128);
    c.lr = cfg.get_double("cgm.lr", 1e-3);
    c.lr_gan = cfg.get_double("cgm.lr_gan", 5e-4);
    c.beta = cfg.get_double("cgm.beta", 1.0);
    c.recon_weight = cfg.get_double("cgm.recon_weight", 1.0);
    c.latent_noise = cfg.get_double("cgm.latent_noise", 0.35);
    c.recon_gate = cfg.get_double("cgm.recon_gate", 0.05);
    c.seed = uint64_t(cfg.get_int(kind == "vae" ? "cgm.vae_seed" : "cgm.bigan_seed",
                                  kind == "vae" ? 21 : 22));
    // Per-kind overrides.
    c.epochs = cfg.get_int("cgm." + kind + "_epochs", c.epochs);
    c.d_z = cfg.get_int("cgm." + kind + "_d_z", c.d_z);
    return c;
}

AutoencoderConfig autoencoder_config(const Config& cfg) {
    AutoencoderConfig c;
    c.channels = cfg.get_int("ae.channels", 16);
    c.bottleneck = cfg.get_int("ae.bottleneck", 48);
    c.epochs = cfg.get_int("ae.epochs", 12);
    c.batch = cfg.get_int("ae.batch", 128);
    c.lr = cfg.get_double("ae.lr", 1e-3);
    c.recon_gate = cfg.get_double("ae.recon_gate", 0.08);
    c.seed = uint64_t(cfg.get_int("ae.seed", 500));
    return c;
}

ScmFitConfig scm_config(const Config& cfg) {
    ScmFitConfig c;
    c.epochs = cfg.get_int("scm.epochs", 800);
    c.lr = cfg.get_double("scm.lr", 0.05);
    c.patience = cfg.get_int("scm.patience", 100);
    c.hidden = cfg.get_int("scm.hidden", 16);
    c.seed = uint64_t(cfg.get_int("scm.seed", 11));
    return c;
}

void save_normalizer(const std::string& path, const AttributeNormalizer& n) {
    nlohmann::ordered_json j;
    for (int i = 0; i < kNumContinuous; ++i) {
        j[kContinuousNames[size_t(i)]] = {{"min", n.mins[i]}, {"max", n.maxs[i]}};
    }
    write_text(path, j.dump(2) + "\n");
}

AttributeNormalizer load_normalizer(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("missing normalizer file " + path +
                                         " (run `cgx train scm` first)");
    nlohmann::json j;
    in >> j;
    AttributeNormalizer n;
    for (int i = 0; i < kNumContinuous; ++i) {
        n.mins[i] = j.at(kContinuousNames[size_t(i)]).at("min").get<double>();
        n.maxs[i] = j.at(kContinuousNames[size_t(i)]).at("max").get<double>();
    }
    return n;
}

torch::Tensor background_images(const TrainTensors& train, int64_t n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<int64_t> idx(size_t(train.images.size(0)));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(size_t(std::min<int64_t>(n, train.images.size(0))));
    auto sel = torch::tensor(idx, torch::kInt64);
    return train.images.index_select(0, sel);
}

}  // namespace

RunManifest::RunManifest(const std::string& out_dir, const std::string& command,
                         const Config& config)
    : started_(std::chrono::steady_clock::now()) {
    fs::create_directories(out_dir);
    path_ = (fs::path(out_dir) / ("manifest-" + command + ".json")).string();
    doc_["command"] = command;
    doc_["tool_version"] = kVersion;
    doc_["config"] = config.json();
    doc_["checkpoints"] = nlohmann::ordered_json::object();
    doc_["outputs"] = nlohmann::ordered_json::array();
    write("running");
}

void RunManifest::add_checkpoint(const std::string& name, const std::string& path) {
    doc_["checkpoints"][name] = {{"path", path}, {"sha256", checkpoint_digest(path)}};
}

void RunManifest::add_output(const std::string& path) { outputs_.push_back(path); }

void RunManifest::finalize() {
    doc_["outputs"] = outputs_;
    doc_["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    write("complete");
}

void RunManifest::write(const std::string& status) const {
    nlohmann::ordered_json j = doc_;
    j["status"] = status;
    write_text(path_, j.dump(2) + "\n");
}

void write_pgm(const std::string& path, const torch::Tensor& image) {
    torch::Tensor img = image.squeeze().clamp(0, 1).mul(255).round().to(torch::kUInt8).contiguous();
    if (img.dim() != 2) throw std::invalid_argument("write_pgm: expected a 2-D image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "P5\n" << img.size(1) << " " << img.size(0) << "\n255\n";
    out.write(static_cast<const char*>(img.data_ptr()), img.numel());
}

torch::Tensor tile_grid(const std::vector<std::vector<torch::Tensor>>& rows) {
    if (rows.empty()) throw std::invalid_argument("tile_grid: no rows");
    const int64_t sep = 2;
    size_t cols = 0;
    for (const auto& r : rows) cols = std::max(cols, r.size());
    const int64_t H = kImageSize, W = kImageSize;
    torch::Tensor grid = torch::ones({int64_t(rows.size()) * (H + sep) - sep,
                                      int64_t(cols) * (W + sep) - sep}) * 0.25;
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < rows[r].size(); ++c) {
            auto tile = rows[r][c].squeeze();
            grid.narrow(0, int64_t(r) * (H + sep), H).narrow(1, int64_t(c) * (W + sep), W) = tile;
        }
    return grid;
}

torch::Tensor signed_to_gray(const torch::Tensor& map, double scale) {
    if (scale <= 0) return torch::full_like(map, 0.5);
    return (0.5 + 0.5 * map / scale).clamp(0, 1);
}

Workspace load_workspace(const Config& cfg) {
    Workspace ws;
    std::string images = cfg.require_string("data.images");
    std::string attrs = cfg.require_string("data.attributes");
    ws.data = load_dataset(images, attrs);
    ws.data.assign_splits(uint64_t(cfg.get_int("data.split_seed", 7)),
                          cfg.get_double("data.test_fraction", 0.2));
    ws.train = ws.data.subset(Split::Train);
    ws.test = ws.data.subset(Split::Test);
    ws.normalizer = fit_normalizer(ws.train.attributes());
    ws.train_tensors = make_training_tensors(ws.train, ws.normalizer);
    ws.test_tensors = make_training_tensors(ws.test, ws.normalizer);
    return ws;
}

std::string checkpoint_dir(const Config& cfg, const std::string& out_dir) {
    std::string dir = cfg.get_string("checkpoints", (fs::path(out_dir) / "checkpoints").string());
    fs::create_directories(dir);
    return dir;
}

void cmd_train(const Config& cfg, const std::string& component, const std::string& out_dir) {
    RunManifest manifest(out_dir, "train-" + component, cfg);
    Workspace ws = load_workspace(cfg);
    std::string ckpt_dir = checkpoint_dir(cfg, out_dir);
    save_normalizer(ckpt_dir + "/normalizer.json", ws.normalizer);

    if (component == "scm") {
        auto scm_cfg = scm_config(cfg);
        auto attrs = ws.normalizer.normalize_matrix(ws.train.attribute_matrix());
        auto scm = AttributeScm::fit(attrs, CausalGraph::morpho_mnist(), scm_cfg);
        std::string path = ckpt_dir + "/scm.ckpt";
        scm.save(path);
        manifest.add_checkpoint("scm", path);
    } else if (component == "cgm-vae" || component == "cgm-bigan") {
        const std::string kind = component == "cgm-vae" ? "vae" : "bigan";
        auto model_cfg = cgm_config(cfg, kind);
        CgmDiagnostics diag;
        CgmHandle model = kind == "vae"
                              ? train_vae(ws.train_tensors, ws.test_tensors, model_cfg, &diag)
                              : train_bigan(ws.train_tensors, ws.test_tensors, model_cfg, &diag);
        std::string path = ckpt_dir + "/" + kind + ".ckpt";
        model->save(path);
        manifest.add_checkpoint(kind, path);
        nlohmann::ordered_json dj = {{"held_out_l1", diag.held_out_l1},
                                     {"epoch_losses", diag.epoch_losses},
                                     {"mode_collapse_warning", diag.mode_collapse_warning}};
        if (kind == "bigan") dj["discriminator_accuracy"] = diag.discriminator_accuracy;
        write_text(ckpt_dir + "/" + kind + "-diagnostics.json", dj.dump(2) + "\n");
        std::printf("[cgx] %s trained: held-out reconstruction L1 = %s%s\n", kind.c_str(),
                    fmt(diag.held_out_l1).c_str(),
                    kind == "bigan"
                        ? (", discriminator accuracy = " + fmt(diag.discriminator_accuracy)).c_str()
                        : "");
    } else if (component == "classifier") {
        auto clf = train_classifier(ws.train_tensors, ws.test_tensors,
                                    uint64_t(cfg.get_int("clf.seed", 31)), classifier_config(cfg));
        std::string path = ckpt_dir + "/classifier.ckpt";
        clf.save(path);
        manifest.add_checkpoint("classifier", path);
        std::printf("[cgx] classifier trained: held-out accuracy = %s\n",
                    fmt(clf.held_out_accuracy()).c_str());
    } else if (component == "oracles") {
        int64_t n = cfg.get_int("oracle.count", 10);
        ClassifierConfig oc = classifier_config(cfg);
        oc.epochs = cfg.get_int("oracle.epochs", oc.epochs);
        auto oracles = train_oracles(ws.train_tensors, ws.test_tensors, n,
                                     uint64_t(cfg.get_int("oracle.base_seed", 41)), oc);
        for (int64_t i = 0; i < n; ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "oracle-%02lld", static_cast<long long>(i));
            std::string path = ckpt_dir + "/" + name + ".ckpt";
            oracles.oracles[size_t(i)].save(path);
            manifest.add_checkpoint(name, path);
        }
    } else if (component == "autoencoders") {
        auto aes = train_autoencoders(ws.train_tensors, ws.test_tensors, autoencoder_config(cfg));
        std::string path = ckpt_dir + "/autoencoders.ckpt";
        aes.save(path);
        manifest.add_checkpoint("autoencoders", path);
    } else {
        throw std::invalid_argument(
            "unknown component '" + component +
            "' (expected cgm-vae, cgm-bigan, scm, classifier, oracles or autoencoders)");
    }
    manifest.finalize();
}

namespace {

struct LoadedModels {
    CgmHandle vae;
    CgmHandle bigan;
    AttributeScm scm;
    ClassifierHandle classifier;
    AttributeNormalizer normalizer;
};

LoadedModels load_models(const Config& cfg, const std::string& out_dir, bool need_vae,
                         bool need_bigan, RunManifest* manifest) {
    std::string dir = checkpoint_dir(cfg, out_dir);
    LoadedModels m{.vae = nullptr,
                   .bigan = nullptr,
                   .scm = AttributeScm::load(dir + "/scm.ckpt"),
                   .classifier = ClassifierHandle::load(dir + "/classifier.ckpt"),
                   .normalizer = load_normalizer(dir + "/normalizer.json")};
    if (manifest) {
        manifest->add_checkpoint("scm", dir + "/scm.ckpt");
        manifest->add_checkpoint("classifier", dir + "/classifier.ckpt");
    }
    if (need_vae) {
        m.vae = load_cgm(dir + "/vae.ckpt");
        if (manifest) manifest->add_checkpoint("vae", dir + "/vae.ckpt");
    }
    if (need_bigan) {
        m.bigan = load_cgm(dir + "/bigan.ckpt");
        if (manifest) manifest->add_checkpoint("bigan", dir + "/bigan.ckpt");
    }
    return m;
}

AttributeVector normalized_attributes(const Workspace& ws, const Dataset& subset, int64_t i) {
    AttributeVector a = ws.normalizer.normalize(subset.attributes()[size_t(i)]);
    return a;
}

}  // namespace

void cmd_explain_sweep(const Config& cfg, const std::string& out_dir) {
    RunManifest manifest(out_dir, "explain-sweep", cfg);
    Workspace ws = load_workspace(cfg);
    const std::string kind = cfg.get_string("explain.model", "vae");
    LoadedModels models = load_models(cfg, out_dir, kind == "vae", kind == "bigan", &manifest);
    const CgmModel& model = kind == "vae" ? *models.vae : *models.bigan;

    const int64_t instance = cfg.get_int("explain.sweep.instance", 0);
    if (instance < 0 || instance >= ws.test.size())
        throw std::invalid_argument("explain.sweep.instance out of range (test size " +
                                    std::to_string(ws.test.size()) + ")");
    torch::Tensor image = ws.test.images()[instance];
    AttributeVector a_norm = normalized_attributes(ws, ws.test, instance);

    torch::Tensor background = background_images(
        ws.train_tensors, cfg.get_int("explain.background", 100),
        uint64_t(cfg.get_int("explain.seed", 61)));

    std::vector<std::string> attr_names;
    std::string which = cfg.get_string("explain.sweep.attribute", "all");
    if (which == "all") attr_names = {kContinuousNames.begin(), kContinuousNames.end()};
    else attr_names = {which};
    std::vector<std::string> explainers;
    std::string expl = cfg.get_string("explain.sweep.explainer", "both");
    if (expl == "both") explainers = {"shapley", "contrastive"};
    else explainers = {expl};

    fs::path base = fs::path(out_dir) / "sweeps";
    fs::create_directories(base);
    for (const auto& attr_name : attr_names) {
        int attr_idx = int(std::find(kContinuousNames.begin(), kContinuousNames.end(), attr_name) -
                           kContinuousNames.begin());
        if (attr_idx >= kNumContinuous)
            throw std::invalid_argument("unknown sweep attribute: " + attr_name);
        for (const auto& explainer : explainers) {
            SweepConfig sc;
            sc.attribute = attr_idx;
            sc.values = cfg.get_double_list("explain.sweep.values", {-0.8, -0.5, 0.0, 0.5, 0.8});
            sc.explainer = explainer == "shapley" ? SweepExplainer::Shapley
                                                  : SweepExplainer::Contrastive;
            sc.shap_samples = cfg.get_int("explain.samples", 200);
            sc.seed = uint64_t(cfg.get_int("explain.seed", 61));
            sc.propagate = cfg.get_bool("scm.propagate", true);
            sc.contrastive.steps = cfg.get_int("explain.cem_steps", sc.contrastive.steps);
            sc.contrastive.c_steps = cfg.get_int("explain.cem_c_steps", sc.contrastive.c_steps);
            SweepResult res = sweep_explain(model, models.scm, models.classifier, image, a_norm,
                                            background, sc);

            std::string stem = (base / (kind + "-" + attr_name + "-" + explainer)).string();
            // Raw arrays: counterfactuals, scores, explanation payloads.
            std::vector<torch::Tensor> cfs, scores;
            for (auto& e : res.entries) {
                cfs.push_back(e.counterfactual.unsqueeze(0));
                scores.push_back(e.scores.unsqueeze(0));
            }
            save_npy(stem + "-counterfactuals.npy", torch::cat(cfs, 0));
            save_npy(stem + "-scores.npy", torch::cat(scores, 0));
            manifest.add_output(stem + "-counterfactuals.npy");
            manifest.add_output(stem + "-scores.npy");

            // Score table: one row per level.
            std::string table = "value";
            for (int64_t k = 0; k < kNumClasses; ++k) table += ",score_" + std::to_string(k);
            table += "\n";
            for (auto& e : res.entries) {
                table += fmt(e.value);
                for (int64_t k = 0; k < kNumClasses; ++k)
                    table += "," + fmt(e.scores[k].item<double>());
                table += "\n";
            }
            write_text(stem + "-scores.csv", table);
            manifest.add_output(stem + "-scores.csv");

            std::vector<std::vector<torch::Tensor>> grid_rows;
            if (sc.explainer == SweepExplainer::Shapley) {
                std::vector<torch::Tensor> maps;
                double scale = 0;
                for (auto& e : res.entries) {
                    maps.push_back(e.saliency->maps.unsqueeze(0));
                    scale = std::max(scale, e.saliency->maps.abs().max().item<double>());
                }
                save_npy(stem + "-saliency.npy", torch::cat(maps, 0));
                manifest.add_output(stem + "-saliency.npy");
                for (auto& e : res.entries) {
                    std::vector<torch::Tensor> row = {e.counterfactual};
                    for (int64_t k = 0; k < kNumClasses; ++k)
                        row.push_back(signed_to_gray(e.saliency->maps[k], scale));
                    grid_rows.push_back(row);
                }
            } else {
                std::vector<torch::Tensor> pns, pps;
                for (auto& e : res.entries) {
                    pns.push_back(e.contrastive->pn_delta.unsqueeze(0));
                    pps.push_back(e.contrastive->pp_retained.unsqueeze(0));
                }
                save_npy(stem + "-pn.npy", torch::cat(pns, 0));
                save_npy(stem + "-pp.npy", torch::cat(pps, 0));
                manifest.add_output(stem + "-pn.npy");
                manifest.add_output(stem + "-pp.npy");
                double scale = 0;
                for (auto& e : res.entries)
                    scale = std::max(scale, e.contrastive->pn_delta.abs().max().item<double>());
                for (auto& e : res.entries)
                    grid_rows.push_back({e.counterfactual,
                                         signed_to_gray(e.contrastive->pn_delta.squeeze(0), scale),
                                         e.contrastive->pp_retained.squeeze(0)});
            }
            write_pgm(stem + "-grid.pgm", tile_grid(grid_rows));
            manifest.add_output(stem + "-grid.pgm");
        }
    }
    manifest.finalize();
}

void cmd_explain_attributes(const Config& cfg, const std::string& out_dir) {
    RunManifest manifest(out_dir, "explain-attributes", cfg);
    Workspace ws = load_workspace(cfg);
    LoadedModels models = load_models(cfg, out_dir, true, true, &manifest);

    const int64_t per_class = cfg.get_int("attr.instances_per_class", 25);
    const int64_t bg_size = cfg.get_int("attr.background", 100);
    McConfig mc;
    mc.m = cfg.get_int("attr.m", 4);
    mc.seed = uint64_t(cfg.get_int("attr.seed", 71));

    // Background attribute vectors: test set by default, SCM samples on request.
    torch::Tensor background;
    if (cfg.get_string("attr.background_source", "test") == "scm") {
        background = models.scm.sample(bg_size, mc.seed).first.to(torch::kFloat32);
    } else {
        auto all = ws.test_tensors.attrs;
        background = all.narrow(0, 0, std::min(bg_size, all.size(0)));
    }

    nlohmann::ordered_json report;
    std::string csv = "model,class,count,thickness,intensity,slant\n";
    std::map<std::string, torch::Tensor> medians;
    for (const std::string kind : {std::string("vae"), std::string("bigan")}) {
        CgmHandle model = kind == "vae" ? models.vae : models.bigan;
        McAttributeClassifier fhat(model, models.classifier, mc);

        std::vector<AttributeExplanation> explanations;
        std::vector<int64_t> labels;
        for (int64_t k = 0; k < kNumClasses; ++k) {
            int64_t taken = 0;
            for (int64_t i = 0; i < ws.test.size() && taken < per_class; ++i) {
                if (ws.test.attributes()[size_t(i)].label != k) continue;
                AttributeVector a = normalized_attributes(ws, ws.test, i);
                explanations.push_back(attribute_shapley(fhat, a, background));
                labels.push_back(k);
                ++taken;
            }
        }
        GlobalImportance global = global_importance(explanations, labels);
        medians[kind] = global.per_class;
        for (int64_t k = 0; k < kNumClasses; ++k) {
            csv += kind + "," + std::to_string(k) + "," +
                   std::to_string(global.counts[k].item<int64_t>());
            for (int j = 0; j < kNumContinuous; ++j)
                csv += "," + fmt(global.per_class[k][j].item<double>());
            csv += "\n";
        }
        report[kind] = {{"per_class", nlohmann::json::array()}};
        for (int64_t k = 0; k < kNumClasses; ++k)
            report[kind]["per_class"].push_back({global.per_class[k][0].item<double>(),
                                                 global.per_class[k][1].item<double>(),
                                                 global.per_class[k][2].item<double>()});
    }

    // Rank agreement between the two model kinds, per class.
    std::vector<double> agreements;
    for (int64_t k = 0; k < kNumClasses; ++k) {
        std::vector<double> a, b;
        for (int j = 0; j < kNumContinuous; ++j) {
            a.push_back(medians["vae"][k][j].item<double>());
            b.push_back(medians["bigan"][k][j].item<double>());
        }
        agreements.push_back(spearman(a, b));
    }
    double mean_agreement =
        std::accumulate(agreements.begin(), agreements.end(), 0.0) / double(agreements.size());
    report["rank_agreement"] = {{"per_class", agreements}, {"mean", mean_agreement}};

    fs::create_directories(fs::path(out_dir) / "attributes");
    std::string csv_path = (fs::path(out_dir) / "attributes" / "importances.csv").string();
    std::string json_path = (fs::path(out_dir) / "attributes" / "importances.json").string();
    write_text(csv_path, csv);
    write_text(json_path, report.dump(2) + "\n");
    manifest.add_output(csv_path);
    manifest.add_output(json_path);
    manifest.finalize();
}

std::vector<std::string> default_cf_methods() {
    return {"vae-grad", "bigan-grad", "vae-agnostic", "bigan-agnostic", "baseline-pixel"};
}

void save_cf_set(const std::string& dir, const CfSet& set) {
    fs::create_directories(dir);
    save_npy(dir + "/originals.npy", set.originals);
    save_npy(dir + "/counterfactuals.npy", set.counterfactuals);
    save_npy(dir + "/y.npy", set.y);
    save_npy(dir + "/y_target.npy", set.y_target);
    save_npy(dir + "/achieved.npy", set.achieved);
    save_npy(dir + "/success.npy", set.success);
    if (set.artifact_kind != "none") save_npy(dir + "/artifacts.npy", set.artifacts);
    nlohmann::ordered_json meta = {{"method", set.method},
                                   {"artifact_kind", set.artifact_kind},
                                   {"count", set.originals.size(0)}};
    write_text(dir + "/set.json", meta.dump(2) + "\n");
}

CfSet load_cf_set(const std::string& dir) {
    std::ifstream in(dir + "/set.json");
    if (!in) throw std::invalid_argument("missing counterfactual set: " + dir);
    nlohmann::json meta;
    in >> meta;
    CfSet set;
    set.method = meta.value("method", "");
    set.artifact_kind = meta.value("artifact_kind", "none");
    set.originals = load_npy(dir + "/originals.npy");
    set.counterfactuals = load_npy(dir + "/counterfactuals.npy");
    set.y = load_npy(dir + "/y.npy");
    set.y_target = load_npy(dir + "/y_target.npy");
    set.achieved = load_npy(dir + "/achieved.npy");
    set.success = load_npy(dir + "/success.npy");
    if (set.artifact_kind != "none") set.artifacts = load_npy(dir + "/artifacts.npy");
    return set;
}

void cmd_explain_cf(const Config& cfg, const std::string& out_dir) {
    RunManifest manifest(out_dir, "explain-cf", cfg);
    Workspace ws = load_workspace(cfg);

    std::vector<std::string> methods = default_cf_methods();
    if (cfg.has("cf.methods")) {
        methods.clear();
        for (const auto& m : cfg.json().at("cf").at("methods")) methods.push_back(m.get<std::string>());
    }
    bool need_vae = false, need_bigan = false;
    for (const auto& m : methods) {
        need_vae |= m.rfind("vae", 0) == 0;
        need_bigan |= m.rfind("bigan", 0) == 0;
    }
    LoadedModels models = load_models(cfg, out_dir, need_vae, need_bigan, &manifest);

    const int64_t subset = std::min<int64_t>(cfg.get_int("cf.subset", 1000), ws.test.size());
    const std::string policy = cfg.get_string("cf.target_policy", "next");

    GradientCfConfig gcfg;
    gcfg.lambda = cfg.get_double("cf.lambda", 10.0);
    gcfg.steps = cfg.get_int("cf.steps", 300);
    gcfg.lr = cfg.get_double("cf.lr", 0.05);
    gcfg.hinge = cfg.get_bool("cf.hinge", false);
    AgnosticCfConfig acfg;
    acfg.grid = cfg.get_int("cf.grid", 100);
    BaselinePixelCfConfig bcfg;
    bcfg.steps = cfg.get_int("cf.baseline_steps", 150);
    bcfg.lr = cfg.get_double("cf.baseline_lr", 0.05);

    auto target_for = [&](int64_t y) -> int64_t {
        if (policy == "next") return (y + 1) % kNumClasses;
        if (policy.rfind("fixed:", 0) == 0) return std::stoll(policy.substr(6));
        throw std::invalid_argument("unknown cf.target_policy: " + policy);
    };

    torch::Tensor images = ws.test_tensors.images.narrow(0, 0, subset);
    torch::Tensor attrs = ws.test_tensors.attrs.narrow(0, 0, subset);
    torch::Tensor labels = ws.test_tensors.labels.narrow(0, 0, subset);
    torch::Tensor targets = torch::empty({subset}, torch::kInt64);
    for (int64_t i = 0; i < subset; ++i) targets[i] = target_for(labels[i].item<int64_t>());

    for (const auto& method : methods) {
        CfSet set;
        set.method = method;
        set.originals = images;
        set.y = labels.clone();
        set.y_target = targets.clone();
        std::vector<torch::Tensor> cf_list, artifact_list;
        std::vector<int64_t> achieved, success;

        if (method == "vae-grad" || method == "bigan-grad") {
            const CgmModel& model = method == "vae-grad" ? *models.vae : *models.bigan;
            auto res = gradient_cf_batch(model, models.classifier, images, attrs, labels, targets,
                                         gcfg);
            for (auto& e : res) {
                cf_list.push_back(e.counterfactual.unsqueeze(0));
                artifact_list.push_back(e.label_distribution.unsqueeze(0));
                achieved.push_back(e.achieved);
                success.push_back(e.success ? 1 : 0);
            }
            set.artifact_kind = "label-distribution";
            set.artifacts = torch::cat(artifact_list, 0);
        } else if (method == "vae-agnostic" || method == "bigan-agnostic") {
            const CgmModel& model = method == "vae-agnostic" ? *models.vae : *models.bigan;
            std::vector<torch::Tensor> alphas;
            for (int64_t i = 0; i < subset; ++i) {
                AttributeVector a;
                a.thickness = attrs[i][0].item<double>();
                a.intensity = attrs[i][1].item<double>();
                a.slant = attrs[i][2].item<double>();
                a.label = labels[i].item<int64_t>();
                auto e = agnostic_cf(model, models.classifier, images[i], a,
                                     targets[i].item<int64_t>(), acfg);
                cf_list.push_back(e.counterfactual.unsqueeze(0));
                alphas.push_back(torch::tensor({e.alpha}, torch::kFloat64));
                achieved.push_back(e.achieved);
                success.push_back(e.success ? 1 : 0);
            }
            set.artifact_kind = "alpha";
            set.artifacts = torch::stack(alphas);
        } else if (method == "baseline-pixel") {
            for (int64_t i = 0; i < subset; ++i) {
                auto e = baseline_pixel_cf(models.classifier, images[i], bcfg);
                cf_list.push_back(e.counterfactual.unsqueeze(0));
                achieved.push_back(e.achieved);
                success.push_back(e.success ? 1 : 0);
                set.y_target[i] = e.y_target;  // untargeted: achieved class on success
            }
            set.artifact_kind = "none";
        } else {
            throw std::invalid_argument("unknown counterfactual method: " + method);
        }
        set.counterfactuals = torch::cat(cf_list, 0);
        set.achieved = torch::tensor(achieved, torch::kInt64);
        set.success = torch::tensor(success, torch::kInt64);
        std::string dir = (fs::path(out_dir) / "cf" / method).string();
        save_cf_set(dir, set);
        manifest.add_output(dir);
        double rate = set.success.to(torch::kFloat64).mean().item<double>();
        std::printf("[cgx] %s: %lld/%lld counterfactuals reached their target (%.1f%%)\n",
                    method.c_str(),
                    static_cast<long long>(set.success.sum().item<int64_t>()),
                    static_cast<long long>(subset), 100.0 * rate);
    }

    // Comparison figure: first few instances, original vs counterfactual per method.
    std::vector<std::vector<torch::Tensor>> grid;
    int64_t n_show = std::min<int64_t>(6, subset);
    for (const auto& method : methods) {
        CfSet set = load_cf_set((fs::path(out_dir) / "cf" / method).string());
        std::vector<torch::Tensor> row;
        for (int64_t i = 0; i < n_show; ++i) {
            row.push_back(set.originals[i].squeeze(0));
            row.push_back(set.counterfactuals[i].squeeze(0));
        }
        grid.push_back(row);
    }
    std::string fig = (fs::path(out_dir) / "cf" / "comparison.pgm").string();
    write_pgm(fig, tile_grid(grid));
    manifest.add_output(fig);
    manifest.finalize();
}

void cmd_evaluate(const Config& cfg, const std::string& out_dir) {
    RunManifest manifest(out_dir, "evaluate", cfg);
    std::string ckpt_dir = checkpoint_dir(cfg, out_dir);
    ClassifierHandle classifier = ClassifierHandle::load(ckpt_dir + "/classifier.ckpt");
    ClassAutoencoders aes = ClassAutoencoders::load(ckpt_dir + "/autoencoders.ckpt");
    manifest.add_checkpoint("classifier", ckpt_dir + "/classifier.ckpt");
    manifest.add_checkpoint("autoencoders", ckpt_dir + "/autoencoders.ckpt");

    const int64_t n_oracles = cfg.get_int("oracle.count", 10);
    std::vector<ClassifierHandle> oracles;
    for (int64_t i = 0; i < n_oracles; ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "oracle-%02lld", static_cast<long long>(i));
        std::string path = ckpt_dir + "/" + std::string(name) + ".ckpt";
        oracles.push_back(ClassifierHandle::load(path));
        manifest.add_checkpoint(name, path);
    }

    std::vector<std::string> methods = default_cf_methods();
    if (cfg.has("cf.methods")) {
        methods.clear();
        for (const auto& m : cfg.json().at("cf").at("methods")) methods.push_back(m.get<std::string>());
    }
    const double eps = cfg.get_double("metrics.epsilon", 1e-8);
    const double level = cfg.get_double("metrics.confidence", 0.95);

    fs::create_directories(fs::path(out_dir) / "reports");
    std::string records_csv = "method,index,p,q,im1,im2\n";
    std::string scatter_csv = "method,class,n,mean_im1,mean_im2\n";
    std::string oracle_csv = "method,run,score\n";
    std::string report_csv =
        "method,n_total,n_success,success_rate,im1_mean,im1_ci,im2_mean,im2_ci,oracle_mean,"
        "oracle_ci\n";
    nlohmann::ordered_json report;

    for (const auto& method : methods) {
        CfSet set = load_cf_set((fs::path(out_dir) / "cf" / method).string());
        const int64_t n = set.counterfactuals.size(0);
        std::vector<double> im1_values, im2_values;
        std::map<int64_t, std::pair<std::vector<double>, std::vector<double>>> per_class;
        std::vector<int64_t> success_idx;
        for (int64_t i = 0; i < n; ++i)
            if (set.success[i].item<int64_t>() == 1) success_idx.push_back(i);

        for (int64_t i : success_idx) {
            auto x_cf = set.counterfactuals[i].unsqueeze(0);
            int64_t p = set.y[i].item<int64_t>();
            int64_t q = set.y_target[i].item<int64_t>();
            auto rec_p = aes.reconstruct(p, x_cf);
            auto rec_q = aes.reconstruct(q, x_cf);
            auto rec_g = aes.reconstruct_global(x_cf);
            double v1 = im1(x_cf, rec_p, rec_q, eps);
            double v2 = im2(x_cf, rec_q, rec_g, eps);
            im1_values.push_back(v1);
            im2_values.push_back(v2);
            per_class[p].first.push_back(v1);
            per_class[p].second.push_back(v2);
            records_csv += method + "," + std::to_string(i) + "," + std::to_string(p) + "," +
                           std::to_string(q) + "," + fmt(v1) + "," + fmt(v2) + "\n";
        }
        for (auto& [cls, vals] : per_class) {
            double m1 = std::accumulate(vals.first.begin(), vals.first.end(), 0.0) /
                        double(vals.first.size());
            double m2 = std::accumulate(vals.second.begin(), vals.second.end(), 0.0) /
                        double(vals.second.size());
            scatter_csv += method + "," + std::to_string(cls) + "," +
                           std::to_string(vals.first.size()) + "," + fmt(m1) + "," + fmt(m2) + "\n";
        }

        // Oracle agreement over the successful counterfactuals, one score per
        // oracle run.
        std::vector<double> oracle_scores;
        if (!success_idx.empty()) {
            auto idx = torch::tensor(success_idx, torch::kInt64);
            auto cf_images = set.counterfactuals.index_select(0, idx);
            auto f_pred = predict_classes(classifier, cf_images);
            std::vector<int64_t> f_cls(f_pred.data_ptr<int64_t>(),
                                       f_pred.data_ptr<int64_t>() + f_pred.numel());
            for (int64_t r = 0; r < n_oracles; ++r) {
                auto o_pred = predict_classes(oracles[size_t(r)], cf_images);
                std::vector<int64_t> o_cls(o_pred.data_ptr<int64_t>(),
                                           o_pred.data_ptr<int64_t>() + o_pred.numel());
                double score = oracle_score(f_cls, o_cls);
                oracle_scores.push_back(score);
                oracle_csv += method + "," + std::to_string(r) + "," + fmt(score) + "\n";
            }
        }

        auto ci_or_zero = [&](const std::vector<double>& v) {
            return v.size() >= 2 ? mean_ci(v, level)
                                 : MeanCi{v.empty() ? 0.0 : v[0], 0.0, int64_t(v.size())};
        };
        MeanCi im1_ci = ci_or_zero(im1_values);
        MeanCi im2_ci = ci_or_zero(im2_values);
        MeanCi orc_ci = ci_or_zero(oracle_scores);
        double rate = double(success_idx.size()) / double(n);
        report_csv += method + "," + std::to_string(n) + "," + std::to_string(success_idx.size()) +
                      "," + fmt(rate) + "," + fmt(im1_ci.mean) + "," + fmt(im1_ci.half_width) + "," +
                      fmt(im2_ci.mean) + "," + fmt(im2_ci.half_width) + "," + fmt(orc_ci.mean) +
                      "," + fmt(orc_ci.half_width) + "\n";
        report[method] = {{"n_total", n},
                          {"n_success", success_idx.size()},
                          {"success_rate", rate},
                          {"im1", {{"mean", im1_ci.mean}, {"ci95", im1_ci.half_width}, {"n", im1_ci.n}}},
                          {"im2", {{"mean", im2_ci.mean}, {"ci95", im2_ci.half_width}}},
                          {"oracle", {{"mean", orc_ci.mean}, {"ci95", orc_ci.half_width},
                                      {"runs", oracle_scores}}}};
    }

    auto emit = [&](const std::string& name, const std::string& text) {
        std::string path = (fs::path(out_dir) / "reports" / name).string();
        write_text(path, text);
        manifest.add_output(path);
    };
    emit("im_records.csv", records_csv);
    emit("im_scatter.csv", scatter_csv);
    emit("oracle_scores.csv", oracle_csv);
    emit("report.csv", report_csv);
    emit("report.json", report.dump(2) + "\n");
    manifest.finalize();
}

}  // namespace cgx
