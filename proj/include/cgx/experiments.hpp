#pragma once

#include "cgx/attribute_explainer.hpp"
#include "cgx/cf_explainers.hpp"
#include "cgx/cgm.hpp"
#include "cgx/classifiers.hpp"
#include "cgx/config.hpp"
#include "cgx/dataset.hpp"
#include "cgx/metrics.hpp"
#include "cgx/pixel_explainers.hpp"
#include "cgx/scm.hpp"

#include <json.hpp>

#include <chrono>
#include <string>
#include <vector>

namespace cgx {

inline constexpr const char* kVersion = "0.1.0";

// Every run writes a manifest next to its outputs: the config snapshot,
// checkpoint digests, timings and emitted files. Written once up front and
// finalized when the command completes, so interrupted runs are visible.
class RunManifest {
public:
    RunManifest(const std::string& out_dir, const std::string& command, const Config& config);
    void add_checkpoint(const std::string& name, const std::string& path);
    void add_output(const std::string& path);
    void finalize();
    const std::vector<std::string>& outputs() const { return outputs_; }

private:
    void write(const std::string& status) const;
    std::string path_;
    nlohmann::ordered_json doc_;
    std::vector<std::string> outputs_;
    std::chrono::steady_clock::time_point started_;
};

// Grayscale PGM output (portable; every figure has sibling raw data).
void write_pgm(const std::string& path, const torch::Tensor& image);
// Tiles [R,C,28,28] into one grid image with 2px separators.
torch::Tensor tile_grid(const std::vector<std::vector<torch::Tensor>>& rows);
// Signed map -> grayscale with 0.5 neutral, clipped at +/-scale.
torch::Tensor signed_to_gray(const torch::Tensor& map, double scale);

// Shared loading helpers for the commands below.
struct Workspace {
    Dataset data;
    AttributeNormalizer normalizer;
    Dataset train;
    Dataset test;
    TrainTensors train_tensors;
    TrainTensors test_tensors;
};

Workspace load_workspace(const Config& cfg);

std::string checkpoint_dir(const Config& cfg, const std::string& out_dir);

// CLI subcommand implementations. All throw on contract violations and
// failed gates; the CLI maps exceptions to a nonzero exit code.
void cmd_train(const Config& cfg, const std::string& component, const std::string& out_dir);
void cmd_explain_sweep(const Config& cfg, const std::string& out_dir);
void cmd_explain_attributes(const Config& cfg, const std::string& out_dir);
void cmd_explain_cf(const Config& cfg, const std::string& out_dir);
void cmd_evaluate(const Config& cfg, const std::string& out_dir);

// Persisted counterfactual sets (one directory per method).
struct CfSet {
    std::string method;
    torch::Tensor originals;        // [N,1,28,28]
    torch::Tensor counterfactuals;  // [N,1,28,28]
    torch::Tensor y;                // [N]
    torch::Tensor y_target;         // [N]
    torch::Tensor achieved;         // [N]
    torch::Tensor success;          // [N] int64 0/1
    torch::Tensor artifacts;        // [N,10] label distributions or [N,1] alphas
    std::string artifact_kind;      // "label-distribution" | "alpha" | "none"
};

void save_cf_set(const std::string& dir, const CfSet& set);
CfSet load_cf_set(const std::string& dir);

std::vector<std::string> default_cf_methods();

}  // namespace cgx
