#include "cgx/synth.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace cgx::synth {

namespace {

struct Point {
    double x, y;
};

using Stroke = std::vector<Point>;

Stroke arc(double cx, double cy, double rx, double ry, double a0, double a1, int n = 20) {
    Stroke s;
    for (int i = 0; i <= n; ++i) {
        double a = a0 + (a1 - a0) * double(i) / n;
        s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
    }
    return s;
}

Stroke line(Point a, Point b, int n = 8) {
    Stroke s;
    for (int i = 0; i <= n; ++i) {
        double u = double(i) / n;
        s.push_back({a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)});
    }
    return s;
}

// Glyph skeletons in a unit box, x right, y down.
std::vector<Stroke> glyph_strokes(int64_t label) {
    constexpr double pi = 3.14159265358979323846;
    switch (label) {
        case 0:
            return {arc(0.50, 0.50, 0.30, 0.40, 0, 2 * pi, 36)};
        case 1:
            return {line({0.34, 0.28}, {0.54, 0.10}), line({0.54, 0.10}, {0.54, 0.90})};
        case 2:
            return {arc(0.50, 0.30, 0.25, 0.22, -pi, 0.15 * pi, 18),
                    line({0.73, 0.40}, {0.26, 0.88}), line({0.26, 0.88}, {0.76, 0.88})};
        case 3:
            return {arc(0.48, 0.29, 0.23, 0.20, -0.85 * pi, 0.5 * pi, 16),
                    arc(0.48, 0.70, 0.26, 0.21, -0.5 * pi, 0.85 * pi, 16)};
        case 4:
            return {line({0.62, 0.10}, {0.24, 0.58}), line({0.24, 0.58}, {0.80, 0.58}),
                    line({0.63, 0.32}, {0.63, 0.92})};
        case 5:
            return {line({0.72, 0.10}, {0.30, 0.10}), line({0.30, 0.10}, {0.28, 0.46}),
                    arc(0.48, 0.66, 0.25, 0.23, -0.55 * pi, 0.8 * pi, 18)};
        case 6:
            return {arc(0.76, 0.04, 0.48, 0.64, 0.52 * pi, 0.88 * pi, 14),
                    arc(0.50, 0.68, 0.22, 0.21, 0, 2 * pi, 28)};
        case 7:
            return {line({0.24, 0.12}, {0.76, 0.12}), line({0.76, 0.12}, {0.40, 0.90})};
        case 8:
            return {arc(0.50, 0.29, 0.19, 0.18, 0, 2 * pi, 28),
                    arc(0.50, 0.70, 0.24, 0.21, 0, 2 * pi, 28)};
        case 9:
            return {arc(0.50, 0.32, 0.22, 0.21, 0, 2 * pi, 28), line({0.72, 0.34}, {0.64, 0.90})};
        default:
            throw std::invalid_argument("glyph label out of [0,9]");
    }
}

double segment_distance(double px, double py, const Point& a, const Point& b) {
    double vx = b.x - a.x, vy = b.y - a.y;
    double wx = px - a.x, wy = py - a.y;
    double vv = vx * vx + vy * vy;
    double u = vv > 0 ? std::clamp((wx * vx + wy * vy) / vv, 0.0, 1.0) : 0.0;
    double dx = wx - u * vx, dy = wy - u * vy;
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

torch::Tensor render_glyph(int64_t label, double thickness_px, double intensity_8bit,
                           double slant_rad, uint64_t style_seed) {
    if (intensity_8bit < 1.0 || intensity_8bit > 255.0)
        throw std::invalid_argument("intensity must be in [1,255]");
    if (thickness_px <= 0.0) throw std::invalid_argument("thickness must be positive");

    auto strokes = glyph_strokes(label);

    std::mt19937_64 rng(style_seed);
    std::normal_distribution<double> jitter(0.0, 0.022);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    double scale = 1.0 + 0.06 * unit(rng);
    double dx = 0.035 * unit(rng);
    double dy = 0.035 * unit(rng);

    // Unit box -> canvas pixels (glyph occupies roughly rows 4..24).
    const double box = 19.0 * scale;
    const double ox = 14.0 - box * 0.5 + dx * 19.0;
    const double oy = 14.0 - box * 0.5 + dy * 19.0;
    for (auto& stroke : strokes) {
        double jx = jitter(rng), jy = jitter(rng);  // per-stroke offset
        for (auto& p : stroke) {
            double nx = p.x + jx + jitter(rng) * 0.4;
            double ny = p.y + jy + jitter(rng) * 0.4;
            p = {ox + nx * box, oy + ny * box};
        }
    }

    const double shear = std::tan(slant_rad);
    const double yc = (kImageSize - 1) / 2.0;
    const double half = thickness_px / 2.0;
    const double level = intensity_8bit / 255.0;

    torch::Tensor img = torch::zeros({1, kImageSize, kImageSize}, torch::kFloat32);
    auto acc = img.accessor<float, 3>();
    for (int64_t py = 0; py < kImageSize; ++py) {
        for (int64_t px = 0; px < kImageSize; ++px) {
            // Undo the shear so strokes are authored in the upright frame.
            double gx = double(px) + shear * (double(py) - yc);
            double gy = double(py);
            double d = 1e9;
            for (const auto& stroke : strokes)
                for (size_t i = 0; i + 1 < stroke.size(); ++i)
                    d = std::min(d, segment_distance(gx, gy, stroke[i], stroke[i + 1]));
            double coverage = std::clamp(half + 0.5 - d, 0.0, 1.0);
            acc[0][py][px] = float(level * coverage);
        }
    }
    return img;
}

Dataset generate_dataset(int64_t n, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int64_t> label_dist(0, kNumClasses - 1);
    std::gamma_distribution<double> thick_noise(5.0, 0.28);
    std::normal_distribution<double> gauss(0.0, 1.0);

    torch::Tensor images = torch::empty({n, 1, kImageSize, kImageSize}, torch::kFloat32);
    std::vector<AttributeVector> attrs;
    attrs.reserve(size_t(n));
    for (int64_t i = 0; i < n; ++i) {
        AttributeVector a;
        a.label = label_dist(rng);
        a.thickness = std::clamp(0.9 + thick_noise(rng), 1.0, 4.0);
        // Thickness drives intensity through a noisy sigmoid (t -> i edge).
        double z = 1.2 * (a.thickness - 2.2) + 0.6 * gauss(rng);
        a.intensity = 90.0 + 160.0 / (1.0 + std::exp(-z));
        a.slant = std::clamp(0.28 * gauss(rng), -0.75, 0.75);
        uint64_t style_seed = rng();
        images[i] = render_glyph(a.label, a.thickness, a.intensity, a.slant, style_seed);
        attrs.push_back(a);
    }
    return Dataset(std::move(images), std::move(attrs));
}

void write_idx_images(const std::string& path, const torch::Tensor& images, bool gzip_compress) {
    validate_image_batch(images);
    torch::Tensor u8 = (images * 255.0f).round().clamp(0, 255).to(torch::kUInt8).contiguous();
    std::vector<uint8_t> bytes;
    bytes.reserve(16 + size_t(u8.numel()));
    auto push_be32 = [&](uint32_t v) {
        bytes.push_back(uint8_t(v >> 24));
        bytes.push_back(uint8_t(v >> 16));
        bytes.push_back(uint8_t(v >> 8));
        bytes.push_back(uint8_t(v));
    };
    push_be32(0x00000803);
    push_be32(uint32_t(u8.size(0)));
    push_be32(uint32_t(kImageSize));
    push_be32(uint32_t(kImageSize));
    const uint8_t* data = u8.data_ptr<uint8_t>();
    bytes.insert(bytes.end(), data, data + u8.numel());

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    if (!gzip_compress) {
        out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
        return;
    }
    z_stream zs{};
    if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 16 + MAX_WBITS, 8,
                     Z_DEFAULT_STRATEGY) != Z_OK)
        throw std::runtime_error("zlib deflate init failed");
    std::vector<uint8_t> chunk(1 << 16);
    zs.next_in = bytes.data();
    zs.avail_in = uInt(bytes.size());
    int ret = Z_OK;
    do {
        zs.next_out = chunk.data();
        zs.avail_out = uInt(chunk.size());
        ret = deflate(&zs, Z_FINISH);
        out.write(reinterpret_cast<const char*>(chunk.data()),
                  std::streamsize(chunk.size() - zs.avail_out));
    } while (ret != Z_STREAM_END);
    deflateEnd(&zs);
}

void write_attribute_table(const std::string& path, const std::vector<AttributeVector>& attrs) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "thickness,intensity,slant,label\n";
    char buf[128];
    for (const auto& a : attrs) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%lld\n", a.thickness, a.intensity, a.slant,
                      static_cast<long long>(a.label));
        out << buf;
    }
}

}  // namespace cgx::synth
