#include "cgx/synth.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>

// Generates a synthetic Morpho-MNIST-style dataset (IDX images + attribute
// table) for demos and tests when no real data is available.
int main(int argc, char** argv) {
    CLI::App app{"Synthetic Morpho-MNIST-style digit generator"};
    int64_t count = 12000;
    uint64_t seed = 1;
    std::string out_dir = "data";
    bool gzip = false;
    app.add_option("--count", count, "number of images");
    app.add_option("--seed", seed, "generator seed");
    app.add_option("--out", out_dir, "output directory");
    app.add_flag("--gzip", gzip, "gzip-compress the IDX image file");
    CLI11_PARSE(app, argc, argv);

    try {
        std::filesystem::create_directories(out_dir);
        auto data = cgx::synth::generate_dataset(count, seed);
        std::string img_path = out_dir + "/images-idx3-ubyte" + (gzip ? ".gz" : "");
        std::string attr_path = out_dir + "/attributes.csv";
        cgx::synth::write_idx_images(img_path, data.images(), gzip);
        cgx::synth::write_attribute_table(attr_path, data.attributes());
        std::printf("wrote %lld images to %s and attributes to %s\n",
                    static_cast<long long>(count), img_path.c_str(), attr_path.c_str());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
