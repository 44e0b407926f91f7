#pragma once

#include "cgx/types.hpp"

#include <torch/torch.h>

#include <string>
#include <vector>

namespace cgx {

// All observations from one (image file, attribute table) pair, kept in file
// order. Images are stored as a single [N,1,28,28] float tensor scaled to
// [0,1]. Read-only after load.
class Dataset {
public:
    Dataset() = default;
    Dataset(torch::Tensor images, std::vector<AttributeVector> attributes);

    int64_t size() const { return images_.size(0); }
    const torch::Tensor& images() const { return images_; }
    const std::vector<AttributeVector>& attributes() const { return attributes_; }

    Observation observation(int64_t i) const;

    // Continuous attributes as [N,3] float64, labels as [N] int64.
    torch::Tensor attribute_matrix() const;
    torch::Tensor labels() const;

    const std::vector<Split>& splits() const { return splits_; }

    // Deterministic partition: shuffles indices with mt19937_64(seed) and
    // marks the first round(test_fraction*N) as Test. Pure function of seed.
    void assign_splits(uint64_t seed, double test_fraction);

    // Index lists for one side of the partition, ascending.
    std::vector<int64_t> indices(Split split) const;

    // Gathered views for one split: images [M,1,28,28], attrs [M,3], labels [M].
    Dataset subset(Split split) const;
    Dataset subset(const std::vector<int64_t>& idx) const;

private:
    torch::Tensor images_;
    std::vector<AttributeVector> attributes_;
    std::vector<Split> splits_;
};

// Reads an IDX image file (magic 0x00000803, big-endian), transparently
// inflating gzip, plus a row-aligned delimited attribute table with a header
// naming columns thickness, intensity, slant, label. Throws on malformed
// magic ("format error") and on row/image count mismatch ("alignment error").
Dataset load_dataset(const std::string& image_path, const std::string& attribute_path);

// Per-attribute affine map fitted on the training split: min -> -1, max -> +1.
// The label passes through unchanged. No clamping.
struct AttributeNormalizer {
    double mins[kNumContinuous] = {0, 0, 0};
    double maxs[kNumContinuous] = {0, 0, 0};

    AttributeVector normalize(const AttributeVector& a) const;
    AttributeVector denormalize(const AttributeVector& a_norm) const;

    // Batched over [N,3] float64 matrices.
    torch::Tensor normalize_matrix(const torch::Tensor& raw) const;
    torch::Tensor denormalize_matrix(const torch::Tensor& norm) const;
};

// Empirical per-attribute extremes of the training observations. Throws a
// degenerate-range error when a continuous column is constant.
AttributeNormalizer fit_normalizer(const std::vector<AttributeVector>& train);
AttributeNormalizer fit_normalizer(const Dataset& data, Split split = Split::Train);

}  // namespace cgx
