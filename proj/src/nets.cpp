#include "cgx/nets.hpp"

namespace cgx::nets {

namespace {

torch::nn::Conv2d conv(int64_t in, int64_t out, int64_t stride) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::nn::ConvTranspose2d deconv(int64_t in, int64_t out, int64_t stride) {
    if (stride == 1)
        return torch::nn::ConvTranspose2d(
            torch::nn::ConvTranspose2dOptions(in, out, 3).stride(1).padding(1));
    return torch::nn::ConvTranspose2d(
        torch::nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1));
}

torch::nn::LeakyReLU lrelu() {
    return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2));
}

}  // namespace

torch::nn::Sequential image_encoder_stack(int64_t c) {
    return torch::nn::Sequential(conv(1, c, 1), lrelu(),        // 28
                                 conv(c, 2 * c, 2), lrelu(),    // 14
                                 conv(2 * c, 2 * c, 1), lrelu(),
                                 conv(2 * c, 4 * c, 2), lrelu(),  // 7
                                 conv(4 * c, 4 * c, 1), lrelu(), torch::nn::Flatten());
}

int64_t image_encoder_dim(int64_t c) { return 4 * c * 7 * 7; }

DecoderStackImpl::DecoderStackImpl(int64_t input_dim, int64_t c) : base_channels_(c) {
    fc = register_module("fc", torch::nn::Linear(input_dim, 4 * c * 7 * 7));
    deconv = register_module(
        "deconv",
        torch::nn::Sequential(cgx::nets::deconv(4 * c, 4 * c, 1), torch::nn::ReLU(),   // 7
                              cgx::nets::deconv(4 * c, 2 * c, 2), torch::nn::ReLU(),   // 14
                              cgx::nets::deconv(2 * c, 2 * c, 1), torch::nn::ReLU(),
                              cgx::nets::deconv(2 * c, c, 2), torch::nn::ReLU(),       // 28
                              cgx::nets::deconv(c, 1, 1), torch::nn::Sigmoid()));
}

torch::Tensor DecoderStackImpl::forward(const torch::Tensor& input) {
    auto h = torch::relu(fc->forward(input));
    h = h.view({input.size(0), 4 * base_channels_, 7, 7});
    return deconv->forward(h);
}

torch::nn::Sequential classifier_net(int64_t c, int64_t num_classes) {
    return torch::nn::Sequential(conv(1, c, 2), lrelu(),          // 14
                                 conv(c, 2 * c, 2), lrelu(),      // 7
                                 conv(2 * c, 2 * c, 1), lrelu(),
                                 conv(2 * c, 4 * c, 2), lrelu(),  // 4
                                 torch::nn::Flatten(),
                                 torch::nn::Linear(4 * c * 4 * 4, num_classes));
}

ConvAutoencoderImpl::ConvAutoencoderImpl(int64_t c, int64_t bottleneck) : base_channels_(c) {
    enc = register_module("enc", torch::nn::Sequential(conv(1, c, 2), lrelu(),        // 14
                                                       conv(c, 2 * c, 2), lrelu(),    // 7
                                                       torch::nn::Flatten()));
    enc_fc = register_module("enc_fc", torch::nn::Linear(2 * c * 7 * 7, bottleneck));
    dec_fc = register_module("dec_fc", torch::nn::Linear(bottleneck, 2 * c * 7 * 7));
    dec = register_module(
        "dec", torch::nn::Sequential(deconv(2 * c, c, 2), torch::nn::ReLU(),           // 14
                                     deconv(c, 1, 2), torch::nn::Sigmoid()));          // 28
}

torch::Tensor ConvAutoencoderImpl::forward(const torch::Tensor& x) {
    auto h = enc_fc->forward(enc->forward(x));
    h = torch::relu(dec_fc->forward(h));
    h = h.view({x.size(0), 2 * base_channels_, 7, 7});
    return dec->forward(h);
}

void freeze(torch::nn::Module& module) {
    for (auto& p : module.parameters()) p.set_requires_grad(false);
}

void gan_weight_init(torch::nn::Module& module) {
    torch::NoGradGuard ng;
    for (auto& m : module.modules(/*include_self=*/false)) {
        if (auto* c = m->as<torch::nn::Conv2d>()) {
            c->weight.normal_(0.0, 0.02);
            if (c->bias.defined()) c->bias.zero_();
        } else if (auto* d = m->as<torch::nn::ConvTranspose2d>()) {
            d->weight.normal_(0.0, 0.02);
            if (d->bias.defined()) d->bias.zero_();
        }
    }
}

}  // namespace cgx::nets
