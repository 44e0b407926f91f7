#include "cgx/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace cgx {

namespace {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open file: " + path);
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<uint8_t> gunzip(const std::vector<uint8_t>& compressed) {
    z_stream zs{};
    // 16+MAX_WBITS selects gzip decoding.
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw std::runtime_error("zlib init failed");
    std::vector<uint8_t> out;
    std::vector<uint8_t> chunk(1 << 16);
    zs.next_in = const_cast<Bytef*>(compressed.data());
    zs.avail_in = static_cast<uInt>(compressed.size());
    int ret = Z_OK;
    while (ret != Z_STREAM_END) {
        zs.next_out = chunk.data();
        zs.avail_out = static_cast<uInt>(chunk.size());
        ret = inflate(&zs, Z_NO_FLUSH);
        if (ret != Z_OK && ret != Z_STREAM_END) {
            inflateEnd(&zs);
            throw std::runtime_error("gzip inflate failed");
        }
        out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
    }
    inflateEnd(&zs);
    return out;
}

uint32_t read_be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

torch::Tensor parse_idx_images(std::vector<uint8_t> bytes, const std::string& path) {
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) bytes = gunzip(bytes);
    if (bytes.size() < 16) throw std::runtime_error("format error: IDX file too short: " + path);
    uint32_t magic = read_be32(bytes.data());
    if (magic != 0x00000803)
        throw std::runtime_error("format error: bad IDX magic in " + path);
    uint32_t n = read_be32(bytes.data() + 4);
    uint32_t rows = read_be32(bytes.data() + 8);
    uint32_t cols = read_be32(bytes.data() + 12);
    if (rows != kImageSize || cols != kImageSize)
        throw std::runtime_error("format error: expected 28x28 images, got " +
                                 std::to_string(rows) + "x" + std::to_string(cols));
    size_t expected = 16 + size_t(n) * rows * cols;
    if (bytes.size() < expected)
        throw std::runtime_error("format error: truncated IDX payload in " + path);
    auto u8 = torch::from_blob(bytes.data() + 16, {int64_t(n), 1, kImageSize, kImageSize},
                               torch::kUInt8).clone();
    return u8.to(torch::kFloat32).div_(255.0f);
}

char sniff_delimiter(const std::string& header) {
    for (char c : {',', '\t', ';'})
        if (header.find(c) != std::string::npos) return c;
    return ',';
}

std::vector<std::string> split_row(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, delim)) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        size_t start = cell.find_first_not_of(' ');
        out.push_back(start == std::string::npos ? "" : cell.substr(start));
    }
    return out;
}

std::vector<AttributeVector> parse_attribute_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open file: " + path);
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("format error: empty attribute table " + path);
    char delim = sniff_delimiter(header);
    auto cols = split_row(header, delim);
    int it = -1, ii = -1, is = -1, il = -1;
    for (size_t c = 0; c < cols.size(); ++c) {
        std::string name = cols[c];
        std::transform(name.begin(), name.end(), name.begin(), ::tolower);
        if (name == "thickness") it = int(c);
        else if (name == "intensity") ii = int(c);
        else if (name == "slant") is = int(c);
        else if (name == "label") il = int(c);
    }
    if (it < 0 || ii < 0 || is < 0 || il < 0)
        throw std::runtime_error("format error: attribute table must have header columns "
                                 "thickness,intensity,slant,label: " + path);
    std::vector<AttributeVector> rows;
    std::string line;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split_row(line, delim);
        if (int(cells.size()) <= std::max({it, ii, is, il}))
            throw std::runtime_error("format error: short row at line " + std::to_string(lineno));
        AttributeVector a;
        try {
            a.thickness = std::stod(cells[it]);
            a.intensity = std::stod(cells[ii]);
            a.slant = std::stod(cells[is]);
            a.label = std::stoll(cells[il]);
        } catch (const std::exception&) {
            throw std::runtime_error("format error: non-numeric cell at line " + std::to_string(lineno));
        }
        if (a.label < 0 || a.label >= kNumClasses)
            throw std::runtime_error("format error: label out of [0,9] at line " + std::to_string(lineno));
        rows.push_back(a);
    }
    return rows;
}

}  // namespace

Dataset::Dataset(torch::Tensor images, std::vector<AttributeVector> attributes)
    : images_(std::move(images)), attributes_(std::move(attributes)) {
    validate_image_batch(images_);
    if (images_.size(0) != int64_t(attributes_.size()))
        throw std::invalid_argument("Dataset: image/attribute count mismatch");
    splits_.assign(attributes_.size(), Split::Train);
}

Observation Dataset::observation(int64_t i) const {
    if (i < 0 || i >= size()) throw std::out_of_range("Dataset: index " + std::to_string(i));
    return Observation{images_[i], attributes_[size_t(i)], i, splits_[size_t(i)]};
}

torch::Tensor Dataset::attribute_matrix() const {
    torch::Tensor m = torch::empty({size(), kNumContinuous}, torch::kFloat64);
    auto acc = m.accessor<double, 2>();
    for (int64_t i = 0; i < size(); ++i) {
        acc[i][0] = attributes_[size_t(i)].thickness;
        acc[i][1] = attributes_[size_t(i)].intensity;
        acc[i][2] = attributes_[size_t(i)].slant;
    }
    return m;
}

torch::Tensor Dataset::labels() const {
    torch::Tensor l = torch::empty({size()}, torch::kInt64);
    auto acc = l.accessor<int64_t, 1>();
    for (int64_t i = 0; i < size(); ++i) acc[i] = attributes_[size_t(i)].label;
    return l;
}

void Dataset::assign_splits(uint64_t seed, double test_fraction) {
    if (test_fraction < 0.0 || test_fraction > 1.0)
        throw std::invalid_argument("test_fraction must be in [0,1]");
    std::vector<int64_t> idx(size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    int64_t n_test = llround(test_fraction * double(size()));
    splits_.assign(size_t(size()), Split::Train);
    for (int64_t k = 0; k < n_test; ++k) splits_[size_t(idx[size_t(k)])] = Split::Test;
}

std::vector<int64_t> Dataset::indices(Split split) const {
    std::vector<int64_t> out;
    for (int64_t i = 0; i < size(); ++i)
        if (splits_[size_t(i)] == split) out.push_back(i);
    return out;
}

Dataset Dataset::subset(Split split) const { return subset(indices(split)); }

Dataset Dataset::subset(const std::vector<int64_t>& idx) const {
    torch::Tensor sel = torch::empty({int64_t(idx.size())}, torch::kInt64);
    auto acc = sel.accessor<int64_t, 1>();
    std::vector<AttributeVector> attrs;
    attrs.reserve(idx.size());
    for (size_t k = 0; k < idx.size(); ++k) {
        acc[int64_t(k)] = idx[k];
        attrs.push_back(attributes_.at(size_t(idx[k])));
    }
    return Dataset(images_.index_select(0, sel), std::move(attrs));
}

Dataset load_dataset(const std::string& image_path, const std::string& attribute_path) {
    torch::Tensor images = parse_idx_images(read_file_bytes(image_path), image_path);
    std::vector<AttributeVector> attrs = parse_attribute_table(attribute_path);
    if (images.size(0) != int64_t(attrs.size()))
        throw std::runtime_error("alignment error: " + std::to_string(images.size(0)) + " images vs " +
                                 std::to_string(attrs.size()) + " attribute rows");
    return Dataset(std::move(images), std::move(attrs));
}

AttributeVector AttributeNormalizer::normalize(const AttributeVector& a) const {
    AttributeVector out = a;
    for (int i = 0; i < kNumContinuous; ++i)
        out.continuous(i) = 2.0 * (a.continuous(i) - mins[i]) / (maxs[i] - mins[i]) - 1.0;
    return out;
}

AttributeVector AttributeNormalizer::denormalize(const AttributeVector& a_norm) const {
    AttributeVector out = a_norm;
    for (int i = 0; i < kNumContinuous; ++i)
        out.continuous(i) = mins[i] + (a_norm.continuous(i) + 1.0) * 0.5 * (maxs[i] - mins[i]);
    return out;
}

torch::Tensor AttributeNormalizer::normalize_matrix(const torch::Tensor& raw) const {
    torch::Tensor lo = torch::tensor({mins[0], mins[1], mins[2]}, torch::kFloat64);
    torch::Tensor hi = torch::tensor({maxs[0], maxs[1], maxs[2]}, torch::kFloat64);
    return (raw.to(torch::kFloat64) - lo) / (hi - lo) * 2.0 - 1.0;
}

torch::Tensor AttributeNormalizer::denormalize_matrix(const torch::Tensor& norm) const {
    torch::Tensor lo = torch::tensor({mins[0], mins[1], mins[2]}, torch::kFloat64);
    torch::Tensor hi = torch::tensor({maxs[0], maxs[1], maxs[2]}, torch::kFloat64);
    return lo + (norm.to(torch::kFloat64) + 1.0) * 0.5 * (hi - lo);
}

AttributeNormalizer fit_normalizer(const std::vector<AttributeVector>& train) {
    if (train.empty()) throw std::invalid_argument("fit_normalizer: empty training set");
    AttributeNormalizer n;
    for (int i = 0; i < kNumContinuous; ++i) {
        double lo = train[0].continuous(i), hi = train[0].continuous(i);
        for (const auto& a : train) {
            lo = std::min(lo, a.continuous(i));
            hi = std::max(hi, a.continuous(i));
        }
        if (!(lo < hi))
            throw std::runtime_error("degenerate-range error: attribute " + kContinuousNames[size_t(i)] +
                                     " is constant on the training split");
        n.mins[i] = lo;
        n.maxs[i] = hi;
    }
    return n;
}

AttributeNormalizer fit_normalizer(const Dataset& data, Split split) {
    std::vector<AttributeVector> train;
    for (int64_t i = 0; i < data.size(); ++i)
        if (data.splits()[size_t(i)] == split) train.push_back(data.attributes()[size_t(i)]);
    return fit_normalizer(train);
}

}  // namespace cgx
