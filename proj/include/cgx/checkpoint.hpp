#pragma once

#include <torch/torch.h>

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace cgx {

// Self-describing checkpoint container: a JSON metadata block (architecture,
// hyperparameters, seeds) followed by named little-endian tensors. Written
// bytes are a pure function of (meta, tensors), so file digests double as
// identity checks for determinism tests.
struct Checkpoint {
    nlohmann::json meta;
    std::vector<std::pair<std::string, torch::Tensor>> tensors;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    torch::Tensor tensor(const std::string& name) const;
    bool has_tensor(const std::string& name) const;

    // Copies a module's named parameters + buffers into the container.
    void put_module(const std::string& prefix, const torch::nn::Module& module);
    // Loads them back (shapes must match).
    void load_module(const std::string& prefix, torch::nn::Module& module) const;
};

std::string checkpoint_digest(const std::string& path);

}  // namespace cgx
