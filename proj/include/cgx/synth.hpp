#pragma once

#include "cgx/dataset.hpp"
#include "cgx/types.hpp"

#include <torch/torch.h>

#include <string>
#include <vector>

namespace cgx::synth {

// Morpho-MNIST-style synthetic digits: ten stroke-based glyph classes
// rendered with controllable stroke thickness (pixels), brightness intensity
// (8-bit units) and shear slant (radians), plus per-sample style jitter.
// The generating attribute law matches the assumed causal graph: thickness
// drives intensity; slant and label are roots.

// Renders one glyph. thickness_px is the stroke width, intensity_8bit the
// interior brightness in [1,255], slant_rad the shear angle (positive leans
// the top to the right). style_seed controls the jitter.
torch::Tensor render_glyph(int64_t label, double thickness_px, double intensity_8bit,
                           double slant_rad, uint64_t style_seed);

// Draws n observations from the ground-truth attribute law and renders them.
Dataset generate_dataset(int64_t n, uint64_t seed);

// IDX3 writer (magic 0x00000803, big-endian dims, uint8 pixels), optional gzip.
void write_idx_images(const std::string& path, const torch::Tensor& images, bool gzip_compress);

// Header row "thickness,intensity,slant,label", one row per observation.
void write_attribute_table(const std::string& path, const std::vector<AttributeVector>& attrs);

}  // namespace cgx::synth
