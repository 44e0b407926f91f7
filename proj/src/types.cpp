#include "cgx/types.hpp"

namespace cgx {

torch::Tensor validate_image(const torch::Tensor& t) {
    torch::Tensor img = t;
    if (img.dim() == 2) img = img.unsqueeze(0);
    if (img.dim() != 3 || img.size(0) != 1 || img.size(1) != kImageSize || img.size(2) != kImageSize)
        throw std::invalid_argument("image must be [1,28,28], got " + std::to_string(t.dim()) + "-d tensor");
    if (img.scalar_type() != torch::kFloat32)
        throw std::invalid_argument("image must be float32");
    const double lo = img.min().item<double>();
    const double hi = img.max().item<double>();
    if (lo < 0.0 || hi > 1.0)
        throw std::invalid_argument("image pixels out of [0,1]: min=" + std::to_string(lo) +
                                    " max=" + std::to_string(hi));
    return img;
}

void validate_image_batch(const torch::Tensor& t) {
    if (t.dim() != 4 || t.size(1) != 1 || t.size(2) != kImageSize || t.size(3) != kImageSize)
        throw std::invalid_argument("image batch must be [N,1,28,28]");
    if (t.scalar_type() != torch::kFloat32)
        throw std::invalid_argument("image batch must be float32");
    if (t.numel() > 0) {
        const double lo = t.min().item<double>();
        const double hi = t.max().item<double>();
        if (lo < 0.0 || hi > 1.0)
            throw std::invalid_argument("image batch pixels out of [0,1]");
    }
}

}  // namespace cgx
