#pragma once

#include "cgx/types.hpp"

#include <torch/torch.h>

namespace cgx::nets {

// Five-stage convolutional image encoder: [N,1,28,28] -> [N, feature_dim].
// Stages 2 and 4 stride down to 14 and 7.
torch::nn::Sequential image_encoder_stack(int64_t base_channels);
int64_t image_encoder_dim(int64_t base_channels);

// Five-stage transposed-convolution decoder body: [N, 4c*7*7] (reshaped
// internally from the fc input) -> [N,1,28,28] in [0,1].
struct DecoderStackImpl : torch::nn::Module {
    DecoderStackImpl(int64_t input_dim, int64_t base_channels);
    torch::Tensor forward(const torch::Tensor& input);

    torch::nn::Linear fc{nullptr};
    torch::nn::Sequential deconv{nullptr};
    int64_t base_channels_;
};
TORCH_MODULE(DecoderStack);

// Classifier trunk: 4 conv stages + single fully-connected head -> logits.
torch::nn::Sequential classifier_net(int64_t base_channels, int64_t num_classes = kNumClasses);

// Autoencoder with two conv layers + one fc on each side.
struct ConvAutoencoderImpl : torch::nn::Module {
    ConvAutoencoderImpl(int64_t base_channels, int64_t bottleneck);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Sequential enc{nullptr};
    torch::nn::Linear enc_fc{nullptr};
    torch::nn::Linear dec_fc{nullptr};
    torch::nn::Sequential dec{nullptr};
    int64_t base_channels_;
};
TORCH_MODULE(ConvAutoencoder);

// DCGAN-style N(0, 0.02) weight initialization.
void gan_weight_init(torch::nn::Module& module);

// Drops requires_grad on every parameter of a trained module; explainers
// differentiate with respect to inputs only.
void freeze(torch::nn::Module& module);

}  // namespace cgx::nets
