#pragma once

#include <torch/torch.h>

#include <string>

namespace cgx {

// Minimal NPY (v1.0) I/O for float32/float64/int64 tensors, C-order,
// little-endian. Enough for persisting explanation arrays and counterfactual
// sets in a form numpy can read directly.
void save_npy(const std::string& path, const torch::Tensor& tensor);
torch::Tensor load_npy(const std::string& path);

}  // namespace cgx
