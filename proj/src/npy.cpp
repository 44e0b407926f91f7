#include "cgx/npy.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace cgx {

namespace {

std::string dtype_descr(torch::ScalarType t) {
    switch (t) {
        case torch::kFloat32: return "<f4";
        case torch::kFloat64: return "<f8";
        case torch::kInt64: return "<i8";
        case torch::kUInt8: return "|u1";
        default: throw std::invalid_argument("npy: unsupported dtype");
    }
}

torch::ScalarType descr_dtype(const std::string& d) {
    if (d == "<f4") return torch::kFloat32;
    if (d == "<f8") return torch::kFloat64;
    if (d == "<i8") return torch::kInt64;
    if (d == "|u1") return torch::kUInt8;
    throw std::runtime_error("npy: unsupported descr " + d);
}

}  // namespace

void save_npy(const std::string& path, const torch::Tensor& tensor) {
    torch::Tensor t = tensor.contiguous().cpu();
    std::ostringstream shape;
    shape << "(";
    for (int64_t i = 0; i < t.dim(); ++i) {
        shape << t.size(i) << (t.dim() == 1 ? "," : (i + 1 < t.dim() ? ", " : ""));
    }
    shape << ")";
    std::string header = "{'descr': '" + dtype_descr(t.scalar_type()) +
                         "', 'fortran_order': False, 'shape': " + shape.str() + ", }";
    size_t unpadded = 10 + header.size() + 1;
    size_t padded = (unpadded + 63) / 64 * 64;
    header += std::string(padded - unpadded, ' ');
    header += '\n';

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("npy: cannot write " + path);
    const char magic[8] = {'\x93', 'N', 'U', 'M', 'P', 'Y', '\x01', '\x00'};
    out.write(magic, 8);
    uint16_t hlen = static_cast<uint16_t>(header.size());
    char hlen_le[2] = {char(hlen & 0xff), char(hlen >> 8)};
    out.write(hlen_le, 2);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(static_cast<const char*>(t.data_ptr()),
              static_cast<std::streamsize>(t.numel() * t.element_size()));
    if (!out) throw std::runtime_error("npy: write failed for " + path);
}

torch::Tensor load_npy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("npy: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, "\x93NUMPY", 6) != 0)
        throw std::runtime_error("npy: bad magic in " + path);
    char hlen_le[2];
    in.read(hlen_le, 2);
    uint16_t hlen = uint16_t(uint8_t(hlen_le[0])) | (uint16_t(uint8_t(hlen_le[1])) << 8);
    std::string header(hlen, '\0');
    in.read(header.data(), hlen);

    auto grab = [&](const std::string& key) {
        auto pos = header.find(key);
        if (pos == std::string::npos) throw std::runtime_error("npy: header missing " + key);
        return pos + key.size();
    };
    auto dpos = grab("'descr': '");
    std::string descr = header.substr(dpos, header.find('\'', dpos) - dpos);
    if (header.find("'fortran_order': False") == std::string::npos)
        throw std::runtime_error("npy: fortran order unsupported");
    auto spos = grab("'shape': (");
    std::string shape_str = header.substr(spos, header.find(')', spos) - spos);
    std::vector<int64_t> shape;
    std::stringstream ss(shape_str);
    std::string item;
    while (std::getline(ss, item, ','))
        if (item.find_first_not_of(" \t") != std::string::npos) shape.push_back(std::stoll(item));

    auto dtype = descr_dtype(descr);
    torch::Tensor t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
    in.read(static_cast<char*>(t.data_ptr()),
            static_cast<std::streamsize>(t.numel() * t.element_size()));
    if (in.gcount() != t.numel() * t.element_size())
        throw std::runtime_error("npy: truncated payload in " + path);
    return t;
}

}  // namespace cgx
