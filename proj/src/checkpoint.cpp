#include "cgx/checkpoint.hpp"

#include "cgx/sha256.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cgx {

namespace {

constexpr char kMagic[8] = {'C', 'G', 'X', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& out, uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = char(v >> (8 * i));
    out.write(b, 8);
}

uint64_t read_u64(std::istream& in) {
    char b[8];
    in.read(b, 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(b[i])) << (8 * i);
    return v;
}

int dtype_code(torch::ScalarType t) {
    switch (t) {
        case torch::kFloat32: return 0;
        case torch::kFloat64: return 1;
        case torch::kInt64: return 2;
        default: throw std::invalid_argument("checkpoint: unsupported dtype");
    }
}

torch::ScalarType code_dtype(int c) {
    switch (c) {
        case 0: return torch::kFloat32;
        case 1: return torch::kFloat64;
        case 2: return torch::kInt64;
    }
    throw std::runtime_error("checkpoint: bad dtype code");
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out.write(kMagic, 8);
    std::string meta_str = meta.dump();
    write_u64(out, meta_str.size());
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    write_u64(out, tensors.size());
    for (const auto& [name, tensor] : tensors) {
        torch::Tensor t = tensor.contiguous().cpu();
        write_u64(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u64(out, static_cast<uint64_t>(dtype_code(t.scalar_type())));
        write_u64(out, static_cast<uint64_t>(t.dim()));
        for (int64_t i = 0; i < t.dim(); ++i) write_u64(out, static_cast<uint64_t>(t.size(i)));
        out.write(static_cast<const char*>(t.data_ptr()),
                  static_cast<std::streamsize>(t.numel() * t.element_size()));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    Checkpoint ckpt;
    uint64_t meta_len = read_u64(in);
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
    ckpt.meta = nlohmann::json::parse(meta_str);
    uint64_t count = read_u64(in);
    for (uint64_t i = 0; i < count; ++i) {
        uint64_t name_len = read_u64(in);
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        auto dtype = code_dtype(static_cast<int>(read_u64(in)));
        uint64_t dim = read_u64(in);
        std::vector<int64_t> shape(dim);
        for (auto& s : shape) s = static_cast<int64_t>(read_u64(in));
        torch::Tensor t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
        in.read(static_cast<char*>(t.data_ptr()),
                static_cast<std::streamsize>(t.numel() * t.element_size()));
        if (!in) throw std::runtime_error("checkpoint: truncated tensor " + name + " in " + path);
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

torch::Tensor Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw std::runtime_error("checkpoint: missing tensor " + name);
}

bool Checkpoint::has_tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

void Checkpoint::put_module(const std::string& prefix, const torch::nn::Module& module) {
    for (const auto& p : module.named_parameters(/*recurse=*/true))
        tensors.emplace_back(prefix + "." + p.key(), p.value().detach().clone());
    for (const auto& b : module.named_buffers(/*recurse=*/true))
        tensors.emplace_back(prefix + "." + b.key(), b.value().detach().clone());
}

void Checkpoint::load_module(const std::string& prefix, torch::nn::Module& module) const {
    torch::NoGradGuard no_grad;
    for (auto& p : module.named_parameters(/*recurse=*/true))
        p.value().copy_(tensor(prefix + "." + p.key()));
    for (auto& b : module.named_buffers(/*recurse=*/true))
        b.value().copy_(tensor(prefix + "." + b.key()));
}

std::string checkpoint_digest(const std::string& path) { return Sha256::of_file(path); }

}  // namespace cgx
