#include "cgx/attribute_explainer.hpp"
#include "cgx/cf_explainers.hpp"
#include "cgx/cgm.hpp"
#include "cgx/classifiers.hpp"
#include "cgx/dataset.hpp"
#include "cgx/experiments.hpp"
#include "cgx/metrics.hpp"
#include "cgx/npy.hpp"
#include "cgx/pixel_explainers.hpp"
#include "cgx/scm.hpp"
#include "cgx/synth.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <torch/torch.h>

namespace py = pybind11;
using namespace cgx;

namespace {

torch::Tensor to_tensor(const py::array& arr, torch::ScalarType dtype) {
    torch::Tensor out;
    if (dtype == torch::kFloat32) {
        auto a = py::array_t<float, py::array::c_style | py::array::forcecast>::ensure(arr);
        std::vector<int64_t> shape(a.ndim());
        for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[size_t(i)] = a.shape(i);
        out = torch::from_blob(const_cast<float*>(a.data()), shape, torch::kFloat32).clone();
    } else if (dtype == torch::kFloat64) {
        auto a = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(arr);
        std::vector<int64_t> shape(a.ndim());
        for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[size_t(i)] = a.shape(i);
        out = torch::from_blob(const_cast<double*>(a.data()), shape, torch::kFloat64).clone();
    } else if (dtype == torch::kInt64) {
        auto a = py::array_t<int64_t, py::array::c_style | py::array::forcecast>::ensure(arr);
        std::vector<int64_t> shape(a.ndim());
        for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[size_t(i)] = a.shape(i);
        out = torch::from_blob(const_cast<int64_t*>(a.data()), shape, torch::kInt64).clone();
    } else {
        throw std::invalid_argument("unsupported dtype");
    }
    return out;
}

py::array to_array(const torch::Tensor& t) {
    torch::Tensor c = t.contiguous().cpu();
    std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
    switch (c.scalar_type()) {
        case torch::kFloat32:
            return py::array_t<float>(shape, c.data_ptr<float>());
        case torch::kFloat64:
            return py::array_t<double>(shape, c.data_ptr<double>());
        case torch::kInt64:
            return py::array_t<int64_t>(shape, c.data_ptr<int64_t>());
        default:
            return to_array(c.to(torch::kFloat64));
    }
}

torch::Tensor images_tensor(const py::array& images) {
    auto t = to_tensor(images, torch::kFloat32);
    if (t.dim() == 3) t = t.unsqueeze(1);  // [N,28,28] -> [N,1,28,28]
    if (t.dim() == 2) t = t.unsqueeze(0).unsqueeze(0);
    return t;
}

// Attribute rows as [N,4] (thickness, intensity, slant, label).
py::array attrs_array(const std::vector<AttributeVector>& attrs) {
    py::array_t<double> out(std::vector<py::ssize_t>{py::ssize_t(attrs.size()), 4});
    auto acc = out.mutable_unchecked<2>();
    for (size_t i = 0; i < attrs.size(); ++i) {
        acc(py::ssize_t(i), 0) = attrs[i].thickness;
        acc(py::ssize_t(i), 1) = attrs[i].intensity;
        acc(py::ssize_t(i), 2) = attrs[i].slant;
        acc(py::ssize_t(i), 3) = double(attrs[i].label);
    }
    return out;
}

AttributeVector attr_from_seq(const py::sequence& seq) {
    if (py::len(seq) != 4) throw std::invalid_argument("attribute vector must be (t, i, s, label)");
    AttributeVector a;
    a.thickness = seq[0].cast<double>();
    a.intensity = seq[1].cast<double>();
    a.slant = seq[2].cast<double>();
    a.label = seq[3].cast<int64_t>();
    return a;
}

py::dict cf_to_dict(const CfExplanation& e) {
    py::dict d;
    d["counterfactual"] = to_array(e.counterfactual.squeeze());
    d["y"] = e.y;
    d["y_target"] = e.y_target;
    d["achieved"] = e.achieved;
    d["success"] = e.success;
    d["evaluations"] = e.evaluations;
    if (e.label_distribution.defined()) d["label_distribution"] = to_array(e.label_distribution);
    d["alpha"] = e.alpha;
    d["best_loss"] = e.best_loss;
    return d;
}

InterventionSpec spec_from_dict(const py::dict& d) {
    std::map<std::string, double> values;
    for (auto item : d) values[item.first.cast<std::string>()] = item.second.cast<double>();
    return InterventionSpec::from_map(values);
}

TrainTensors make_tensors(const py::array& x, const py::array& a, const py::array& l) {
    TrainTensors t;
    t.images = images_tensor(x);
    t.attrs = to_tensor(a, torch::kFloat32);
    t.labels = to_tensor(l, torch::kInt64);
    return t;
}

CgmConfig parse_cgm_config(const py::dict& d) {
    CgmConfig cfg;
    if (d.contains("d_z")) cfg.d_z = d["d_z"].cast<int64_t>();
    if (d.contains("d_e")) cfg.d_e = d["d_e"].cast<int64_t>();
    if (d.contains("channels")) cfg.channels = d["channels"].cast<int64_t>();
    if (d.contains("epochs")) cfg.epochs = d["epochs"].cast<int64_t>();
    if (d.contains("batch")) cfg.batch = d["batch"].cast<int64_t>();
    if (d.contains("lr")) cfg.lr = d["lr"].cast<double>();
    if (d.contains("lr_gan")) cfg.lr_gan = d["lr_gan"].cast<double>();
    if (d.contains("beta")) cfg.beta = d["beta"].cast<double>();
    if (d.contains("recon_weight")) cfg.recon_weight = d["recon_weight"].cast<double>();
    if (d.contains("latent_noise")) cfg.latent_noise = d["latent_noise"].cast<double>();
    if (d.contains("seed")) cfg.seed = d["seed"].cast<uint64_t>();
    if (d.contains("recon_gate")) cfg.recon_gate = d["recon_gate"].cast<double>();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_cgx, m) {
    m.doc() = "Causal generative explainers: counterfactual inference over digit attributes";
    m.attr("__version__") = kVersion;

    m.def("set_num_threads", [](int n) { at::set_num_threads(n); });

    // ---- data ----
    m.def(
        "generate_dataset",
        [](int64_t n, uint64_t seed) {
            auto data = synth::generate_dataset(n, seed);
            return py::make_tuple(to_array(data.images().squeeze(1)), attrs_array(data.attributes()));
        },
        py::arg("n"), py::arg("seed") = 1);
    m.def(
        "load_dataset",
        [](const std::string& images, const std::string& attrs) {
            auto data = load_dataset(images, attrs);
            return py::make_tuple(to_array(data.images().squeeze(1)), attrs_array(data.attributes()));
        },
        py::arg("image_path"), py::arg("attribute_path"));
    m.def("render_glyph", [](int64_t label, double t, double i, double s, uint64_t seed) {
        return to_array(synth::render_glyph(label, t, i, s, seed).squeeze(0));
    });
    m.def("save_npy", [](const std::string& path, const py::array& arr) {
        save_npy(path, to_tensor(arr, torch::kFloat64));
    });

    py::class_<AttributeNormalizer>(m, "Normalizer")
        .def_static("fit",
                    [](const py::array& attrs) {
                        auto t = to_tensor(attrs, torch::kFloat64);
                        std::vector<AttributeVector> rows;
                        for (int64_t r = 0; r < t.size(0); ++r) {
                            AttributeVector a;
                            a.thickness = t[r][0].item<double>();
                            a.intensity = t[r][1].item<double>();
                            a.slant = t[r][2].item<double>();
                            rows.push_back(a);
                        }
                        return fit_normalizer(rows);
                    })
        .def("normalize",
             [](const AttributeNormalizer& n, const py::array& raw) {
                 return to_array(n.normalize_matrix(to_tensor(raw, torch::kFloat64)));
             })
        .def("denormalize", [](const AttributeNormalizer& n, const py::array& norm) {
            return to_array(n.denormalize_matrix(to_tensor(norm, torch::kFloat64)));
        });

    // ---- attribute SCM ----
    py::class_<AttributeScm>(m, "AttributeScm")
        .def_static(
            "fit",
            [](const py::array& attrs_norm, int64_t epochs, double lr, int64_t hidden,
               uint64_t seed) {
                ScmFitConfig cfg;
                cfg.epochs = epochs;
                cfg.lr = lr;
                cfg.hidden = hidden;
                cfg.seed = seed;
                return AttributeScm::fit(to_tensor(attrs_norm, torch::kFloat64),
                                         CausalGraph::morpho_mnist(), cfg);
            },
            py::arg("attrs_norm"), py::arg("epochs") = 800, py::arg("lr") = 0.05,
            py::arg("hidden") = 16, py::arg("seed") = 0)
        .def(
            "counterfactual",
            [](const AttributeScm& scm, const py::sequence& a, const py::dict& interventions,
               bool propagate) {
                auto cf = scm.counterfactual(attr_from_seq(a), spec_from_dict(interventions),
                                             propagate);
                return py::make_tuple(cf.thickness, cf.intensity, cf.slant, cf.label);
            },
            py::arg("a"), py::arg("interventions"), py::arg("propagate") = true)
        .def("abduct",
             [](const AttributeScm& scm, const py::sequence& a) {
                 auto n = scm.abduct(attr_from_seq(a));
                 return py::make_tuple(n.thickness, n.intensity, n.slant, n.label);
             })
        .def(
            "sample",
            [](const AttributeScm& scm, int64_t n, uint64_t seed) {
                auto [attrs, labels] = scm.sample(n, seed);
                return py::make_tuple(to_array(attrs), to_array(labels));
            },
            py::arg("n"), py::arg("seed") = 0)
        .def("save", &AttributeScm::save)
        .def_static("load", &AttributeScm::load);

    // ---- generative models ----
    py::class_<CgmModel, CgmHandle>(m, "Cgm")
        .def_property_readonly("kind", [](const CgmModel& c) { return to_string(c.kind()); })
        .def_property_readonly("latent_dim", &CgmModel::latent_dim)
        .def_property_readonly("embed_dim", &CgmModel::embed_dim)
        .def("encode",
             [](const CgmModel& c, const py::array& x, const py::array& a, const py::array& l) {
                 return to_array(c.encode(images_tensor(x), to_tensor(a, torch::kFloat32),
                                          to_tensor(l, torch::kInt64)));
             })
        .def("generate",
             [](const CgmModel& c, const py::array& z, const py::array& a, const py::array& l) {
                 torch::NoGradGuard ng;
                 return to_array(c.generate(to_tensor(z, torch::kFloat32),
                                            to_tensor(a, torch::kFloat32),
                                            to_tensor(l, torch::kInt64))
                                     .squeeze(1));
             })
        .def("generate_from_embedding",
             [](const CgmModel& c, const py::array& z, const py::array& a, const py::array& emb) {
                 torch::NoGradGuard ng;
                 return to_array(c.generate_from_embedding(to_tensor(z, torch::kFloat32),
                                                           to_tensor(a, torch::kFloat32),
                                                           to_tensor(emb, torch::kFloat32))
                                     .squeeze(1));
             })
        .def("counterfactual_image",
             [](const CgmModel& c, const py::array& x, const py::array& a, const py::array& l,
                const py::array& a_cf, const py::array& l_cf) {
                 return to_array(c.counterfactual_image(images_tensor(x),
                                                        to_tensor(a, torch::kFloat32),
                                                        to_tensor(l, torch::kInt64),
                                                        to_tensor(a_cf, torch::kFloat32),
                                                        to_tensor(l_cf, torch::kInt64))
                                     .squeeze(1));
             })
        .def("embedding_matrix", [](const CgmModel& c) { return to_array(c.embedding_matrix()); })
        .def("save", &CgmModel::save);

    m.def(
        "train_vae",
        [](const py::array& x, const py::array& a, const py::array& l, const py::array& hx,
           const py::array& ha, const py::array& hl, const py::dict& config) {
            return train_vae(make_tensors(x, a, l), make_tensors(hx, ha, hl),
                             parse_cgm_config(config));
        },
        py::arg("images"), py::arg("attrs"), py::arg("labels"), py::arg("held_images"),
        py::arg("held_attrs"), py::arg("held_labels"), py::arg("config") = py::dict());
    m.def(
        "train_bigan",
        [](const py::array& x, const py::array& a, const py::array& l, const py::array& hx,
           const py::array& ha, const py::array& hl, const py::dict& config) {
            return train_bigan(make_tensors(x, a, l), make_tensors(hx, ha, hl),
                               parse_cgm_config(config));
        },
        py::arg("images"), py::arg("attrs"), py::arg("labels"), py::arg("held_images"),
        py::arg("held_attrs"), py::arg("held_labels"), py::arg("config") = py::dict());
    m.def("load_cgm", &load_cgm);

    m.def("expected_embedding", [](const py::array& emb, const py::array& p) {
        return to_array(expected_embedding(to_tensor(emb, torch::kFloat32),
                                           to_tensor(p, torch::kFloat32)));
    });
    m.def("interpolated_embedding", [](const py::array& emb, int64_t y, int64_t y_t, double alpha) {
        return to_array(interpolated_embedding(to_tensor(emb, torch::kFloat32), y, y_t, alpha));
    });

    // ---- classifiers ----
    py::class_<ClassifierHandle>(m, "Classifier")
        .def("scores",
             [](const ClassifierHandle& f, const py::array& x) {
                 torch::NoGradGuard ng;
                 return to_array(f.scores(images_tensor(x)));
             })
        .def("predict",
             [](const ClassifierHandle& f, const py::array& x) {
                 return to_array(predict_classes(f, images_tensor(x)));
             })
        .def_property_readonly("held_out_accuracy", &ClassifierHandle::held_out_accuracy)
        .def_property_readonly("seed", &ClassifierHandle::seed)
        .def("save", &ClassifierHandle::save)
        .def_static("load", &ClassifierHandle::load);

    m.def(
        "train_classifier",
        [](const py::array& x, const py::array& l, const py::array& hx, const py::array& hl,
           uint64_t seed, int64_t epochs, double accuracy_gate) {
            ClassifierConfig cfg;
            cfg.epochs = epochs;
            cfg.accuracy_gate = accuracy_gate;
            auto zeros = [](int64_t n) { return torch::zeros({n, kNumContinuous}); };
            TrainTensors train{images_tensor(x), zeros(images_tensor(x).size(0)),
                               to_tensor(l, torch::kInt64)};
            TrainTensors held{images_tensor(hx), zeros(images_tensor(hx).size(0)),
                              to_tensor(hl, torch::kInt64)};
            return train_classifier(train, held, seed, cfg);
        },
        py::arg("images"), py::arg("labels"), py::arg("held_images"), py::arg("held_labels"),
        py::arg("seed") = 0, py::arg("epochs") = 6, py::arg("accuracy_gate") = 0.95);

    // ---- explainers ----
    m.def(
        "shapley_saliency",
        [](const ClassifierHandle& f, const py::array& image, const py::array& background,
           int64_t n_samples, uint64_t seed) {
            auto sal = shapley_saliency(f, images_tensor(image).squeeze(0),
                                        images_tensor(background), n_samples, seed);
            return py::make_tuple(to_array(sal.maps), to_array(sal.base_values));
        },
        py::arg("classifier"), py::arg("image"), py::arg("background"), py::arg("n_samples") = 200,
        py::arg("seed") = 17);
    m.def(
        "contrastive_explain",
        [](const ClassifierHandle& f, const py::array& image, int64_t steps) {
            ContrastiveConfig cfg;
            cfg.steps = steps;
            auto res = contrastive_explain(f, images_tensor(image).squeeze(0), cfg);
            py::dict d;
            d["pn_delta"] = to_array(res.pn_delta.squeeze(0));
            d["pn_success"] = res.pn_success;
            d["pp_retained"] = to_array(res.pp_retained.squeeze(0));
            d["pp_success"] = res.pp_success;
            d["scores_x"] = to_array(res.scores_x);
            d["scores_pn"] = to_array(res.scores_pn);
            d["scores_pp"] = to_array(res.scores_pp);
            return d;
        },
        py::arg("classifier"), py::arg("image"), py::arg("steps") = 200);

    m.def(
        "mc_attribute_scores",
        [](const CgmHandle& model, const ClassifierHandle& f, const py::array& attrs,
           const py::array& labels, int64_t m_samples, uint64_t seed) {
            McConfig cfg;
            cfg.m = m_samples;
            cfg.seed = seed;
            McAttributeClassifier fhat(model, f, cfg);
            return to_array(fhat.scores(to_tensor(attrs, torch::kFloat32),
                                        to_tensor(labels, torch::kInt64)));
        },
        py::arg("model"), py::arg("classifier"), py::arg("attrs"), py::arg("labels"),
        py::arg("m") = 4, py::arg("seed") = 0);
    m.def(
        "attribute_shapley",
        [](const CgmHandle& model, const ClassifierHandle& f, const py::sequence& a,
           const py::array& background, int64_t m_samples, uint64_t seed) {
            McConfig cfg;
            cfg.m = m_samples;
            cfg.seed = seed;
            McAttributeClassifier fhat(model, f, cfg);
            auto expl = attribute_shapley(fhat, attr_from_seq(a),
                                          to_tensor(background, torch::kFloat32));
            return py::make_tuple(to_array(expl.phi), to_array(expl.base));
        },
        py::arg("model"), py::arg("classifier"), py::arg("a"), py::arg("background"),
        py::arg("m") = 4, py::arg("seed") = 0);

    m.def(
        "gradient_cf",
        [](const CgmHandle& model, const ClassifierHandle& f, const py::array& image,
           const py::sequence& a, int64_t y_target, double lambda_, int64_t steps, double lr,
           bool hinge) {
            GradientCfConfig cfg;
            cfg.lambda = lambda_;
            cfg.steps = steps;
            cfg.lr = lr;
            cfg.hinge = hinge;
            return cf_to_dict(gradient_cf(*model, f, images_tensor(image).squeeze(0),
                                          attr_from_seq(a), y_target, cfg));
        },
        py::arg("model"), py::arg("classifier"), py::arg("image"), py::arg("a"),
        py::arg("y_target"), py::arg("lambda_") = 10.0, py::arg("steps") = 300,
        py::arg("lr") = 0.05, py::arg("hinge") = false);
    m.def(
        "agnostic_cf",
        [](const CgmHandle& model, const ClassifierHandle& f, const py::array& image,
           const py::sequence& a, int64_t y_target, int64_t grid) {
            AgnosticCfConfig cfg;
            cfg.grid = grid;
            return cf_to_dict(agnostic_cf(*model, f, images_tensor(image).squeeze(0),
                                          attr_from_seq(a), y_target, cfg));
        },
        py::arg("model"), py::arg("classifier"), py::arg("image"), py::arg("a"),
        py::arg("y_target"), py::arg("grid") = 100);
    m.def(
        "baseline_pixel_cf",
        [](const ClassifierHandle& f, const py::array& image, int64_t steps) {
            BaselinePixelCfConfig cfg;
            cfg.steps = steps;
            return cf_to_dict(baseline_pixel_cf(f, images_tensor(image).squeeze(0), cfg));
        },
        py::arg("classifier"), py::arg("image"), py::arg("steps") = 150);

    // ---- metrics ----
    m.def(
        "im1",
        [](const py::array& x_cf, const py::array& rec_p, const py::array& rec_q, double eps) {
            return im1(to_tensor(x_cf, torch::kFloat64), to_tensor(rec_p, torch::kFloat64),
                       to_tensor(rec_q, torch::kFloat64), eps);
        },
        py::arg("x_cf"), py::arg("recon_p"), py::arg("recon_q"), py::arg("epsilon") = 1e-8);
    m.def(
        "im2",
        [](const py::array& x_cf, const py::array& rec_q, const py::array& rec_g, double eps) {
            return im2(to_tensor(x_cf, torch::kFloat64), to_tensor(rec_q, torch::kFloat64),
                       to_tensor(rec_g, torch::kFloat64), eps);
        },
        py::arg("x_cf"), py::arg("recon_q"), py::arg("recon_global"), py::arg("epsilon") = 1e-8);
    m.def("oracle_score", [](const std::vector<int64_t>& f_cls, const std::vector<int64_t>& o_cls) {
        return oracle_score(f_cls, o_cls);
    });
    m.def(
        "mean_ci",
        [](const std::vector<double>& values, double level) {
            auto ci = mean_ci(values, level);
            return py::make_tuple(ci.mean, ci.half_width, ci.n);
        },
        py::arg("values"), py::arg("level") = 0.95);
    m.def("spearman", &spearman);
    m.def(
        "morphometrics",
        [](const py::array& image, double threshold) -> py::object {
            auto measured = morphometrics(images_tensor(image).squeeze(0), threshold);
            if (!measured) return py::none();
            return py::make_tuple(measured->thickness, measured->intensity, measured->slant);
        },
        py::arg("image"), py::arg("threshold") = 0.5);
}
