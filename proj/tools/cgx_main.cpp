#include "cgx/config.hpp"
#include "cgx/experiments.hpp"

#include <CLI11.hpp>
#include <torch/torch.h>

#include <cstdio>
#include <exception>
#include <string>

namespace {

cgx::Config build_config(const std::string& config_path, int64_t seed_override,
                         bool have_seed) {
    cgx::Config cfg = config_path.empty() ? cgx::Config() : cgx::Config::from_file(config_path);
    cfg.apply_env_overrides();
    if (have_seed) cfg.set("data.split_seed", seed_override);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Causal generative explainers for image classifiers"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    int64_t seed = 0;
    bool have_seed = false;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--out", out_dir, "output directory");
    auto* seed_opt = app.add_option("--seed", seed, "override data.split_seed");

    std::string component;
    auto* train = app.add_subcommand("train", "train a component and write its checkpoint");
    train->add_option("component", component,
                      "cgm-vae | cgm-bigan | scm | classifier | oracles | autoencoders")
        ->required();

    auto* sweep = app.add_subcommand("explain-sweep",
                                     "pixel explanations along an attribute sweep");
    auto* attrs = app.add_subcommand("explain-attributes",
                                     "global attribute importances per class");
    auto* cf = app.add_subcommand("explain-cf", "counterfactual explanation sets per method");
    auto* eval = app.add_subcommand("evaluate", "IM1/IM2 and oracle reports for persisted sets");

    CLI11_PARSE(app, argc, argv);

    try {
        cgx::Config cfg = build_config(config_path, seed, seed_opt->count() > 0);
        at::set_num_threads(int(cfg.get_int("runtime.threads", at::get_num_threads())));
        if (train->parsed()) cgx::cmd_train(cfg, component, out_dir);
        if (sweep->parsed()) cgx::cmd_explain_sweep(cfg, out_dir);
        if (attrs->parsed()) cgx::cmd_explain_attributes(cfg, out_dir);
        if (cf->parsed()) cgx::cmd_explain_cf(cfg, out_dir);
        if (eval->parsed()) cgx::cmd_evaluate(cfg, out_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "[cgx] error: %s\n", e.what());
        return 1;
    }
    return 0;
}
