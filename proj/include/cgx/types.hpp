#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cgx {

constexpr int64_t kImageSize = 28;
constexpr int64_t kNumClasses = 10;
constexpr int kNumContinuous = 3;  // thickness, intensity, slant

inline const std::array<std::string, 3> kContinuousNames = {"thickness", "intensity", "slant"};

// Raw or normalized attribute values for one observation. Whether the
// continuous fields are in raw units (pixels / 8-bit / radians) or in
// normalized [-1,1] units depends on context; the label is always a class
// index in [0,9].
struct AttributeVector {
    double thickness = 0.0;
    double intensity = 0.0;
    double slant = 0.0;
    int64_t label = 0;

    double continuous(int i) const {
        switch (i) {
            case 0: return thickness;
            case 1: return intensity;
            case 2: return slant;
        }
        throw std::out_of_range("AttributeVector: continuous index " + std::to_string(i));
    }
    double& continuous(int i) {
        switch (i) {
            case 0: return thickness;
            case 1: return intensity;
            case 2: return slant;
        }
        throw std::out_of_range("AttributeVector: continuous index " + std::to_string(i));
    }
};

enum class Split { Train, Test };

struct Observation {
    torch::Tensor image;  // [1,28,28] float32 in [0,1]
    AttributeVector attributes;
    int64_t index = -1;   // position in file order
    Split split = Split::Train;
};

// Throws std::invalid_argument unless t is a [1,28,28] (or [28,28]) float
// tensor with all pixels in [0,1]. Returns the [1,28,28] view.
torch::Tensor validate_image(const torch::Tensor& t);

// Throws unless t is [N,1,28,28] float with pixels in [0,1].
void validate_image_batch(const torch::Tensor& t);

}  // namespace cgx
