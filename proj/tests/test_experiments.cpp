#include "cgx/experiments.hpp"
#include "cgx/npy.hpp"
#include "cgx/sha256.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace cgx;
namespace fs = std::filesystem;

TEST_CASE("sha256 matches known vectors") {
    CHECK(Sha256::of_bytes("", 0) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(Sha256::of_bytes("abc", 3) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    std::string longer(1000, 'x');
    CHECK(Sha256::of_bytes(longer.data(), longer.size()).size() == 64);
}

TEST_CASE("npy round-trip for the dtypes we persist") {
    auto tmp = fs::temp_directory_path() / "cgx-npy-test.npy";
    for (auto dtype : {torch::kFloat32, torch::kFloat64, torch::kInt64}) {
        auto t = torch::randn({3, 4, 5}).to(dtype);
        save_npy(tmp.string(), t);
        auto back = load_npy(tmp.string());
        CHECK(int(back.scalar_type()) == int(dtype));
        CHECK(torch::equal(t, back));
    }
    fs::remove(tmp);
}

TEST_CASE("config: dotted keys, lists, env overrides") {
    Config cfg(nlohmann::json{{"data", {{"split_seed", 7}, {"images", "a.idx"}}},
                              {"cf", {{"lambda", 10.0}}}});
    CHECK(cfg.get_int("data.split_seed", 0) == 7);
    CHECK(cfg.get_double("cf.lambda", 0) == 10.0);
    CHECK(cfg.get_int("missing.key", 42) == 42);
    CHECK(cfg.require_string("data.images") == "a.idx");
    CHECK_THROWS_WITH_AS(cfg.require_string("data.attributes"),
                         doctest::Contains("data.attributes"), std::invalid_argument);

    SUBCASE("environment overrides use the CGX_ prefix with __ as the dot") {
        setenv("CGX_DATA__SPLIT_SEED", "99", 1);
        setenv("CGX_CF__HINGE", "true", 1);
        Config c2 = cfg;
        c2.apply_env_overrides();
        CHECK(c2.get_int("data.split_seed", 0) == 99);
        CHECK(c2.get_bool("cf.hinge", false) == true);
        unsetenv("CGX_DATA__SPLIT_SEED");
        unsetenv("CGX_CF__HINGE");
    }
}

TEST_CASE("figure helpers") {
    std::vector<std::vector<torch::Tensor>> rows(2);
    rows[0] = {torch::rand({28, 28}), torch::rand({28, 28})};
    rows[1] = {torch::rand({28, 28})};
    auto grid = tile_grid(rows);
    CHECK(grid.size(0) == 2 * 28 + 2);
    CHECK(grid.size(1) == 2 * 28 + 2);

    auto gray = signed_to_gray(torch::tensor({{-2.0f, 0.0f, 2.0f}}), 2.0);
    CHECK(gray[0][0].item<float>() == 0.0f);
    CHECK(gray[0][1].item<float>() == 0.5f);
    CHECK(gray[0][2].item<float>() == 1.0f);

    auto tmp = fs::temp_directory_path() / "cgx-fig-test.pgm";
    write_pgm(tmp.string(), grid);
    std::ifstream in(tmp.string(), std::ios::binary);
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    CHECK(magic == "P5");
    fs::remove(tmp);
}

TEST_CASE("counterfactual set persistence round-trips") {
    auto dir = fs::temp_directory_path() / "cgx-cfset-test";
    fs::remove_all(dir);
    CfSet set;
    set.method = "vae-grad";
    set.artifact_kind = "label-distribution";
    set.originals = torch::rand({5, 1, 28, 28});
    set.counterfactuals = torch::rand({5, 1, 28, 28});
    set.y = torch::randint(0, 10, {5});
    set.y_target = torch::randint(0, 10, {5});
    set.achieved = set.y_target.clone();
    set.success = torch::ones({5}, torch::kInt64);
    set.artifacts = torch::rand({5, 10});
    save_cf_set(dir.string(), set);

    auto back = load_cf_set(dir.string());
    CHECK(back.method == "vae-grad");
    CHECK(torch::equal(back.counterfactuals, set.counterfactuals));
    CHECK(torch::equal(back.artifacts, set.artifacts));
    fs::remove_all(dir);
}

TEST_CASE("run manifest records config, checkpoints and outputs") {
    auto dir = fs::temp_directory_path() / "cgx-manifest-test";
    fs::remove_all(dir);
    Config cfg(nlohmann::json{{"data", {{"split_seed", 1}}}});
    {
        RunManifest manifest(dir.string(), "unit", cfg);
        manifest.add_output((dir / "thing.csv").string());
        manifest.finalize();
    }
    std::ifstream in(dir / "manifest-unit.json");
    REQUIRE(in.good());
    nlohmann::json j;
    in >> j;
    CHECK(j["status"].get<std::string>() == "complete");
    CHECK(j["command"].get<std::string>() == "unit");
    CHECK(j["config"]["data"]["split_seed"].get<int>() == 1);
    CHECK(j["outputs"].size() == 1);
    CHECK(j.contains("wall_seconds"));
    fs::remove_all(dir);
}
