#pragma once

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace cgx {

// Layered configuration: defaults < JSON file < environment overrides.
// Keys are dotted paths ("data.split_seed"). Environment overrides use the
// prefix CGX_ with "__" standing in for the dot, e.g. CGX_DATA__SPLIT_SEED=7.
class Config {
public:
    Config() : root_(nlohmann::json::object()) {}
    explicit Config(nlohmann::json root) : root_(std::move(root)) {}

    static Config from_file(const std::string& path);

    // Applies every CGX_* environment variable on top of the current values.
    void apply_env_overrides();

    bool has(const std::string& key) const;

    double get_double(const std::string& key, double fallback) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback) const;

    // Required variant: throws std::invalid_argument naming the key.
    std::string require_string(const std::string& key) const;

    void set(const std::string& key, nlohmann::json value);

    const nlohmann::json& json() const { return root_; }

private:
    const nlohmann::json* find(const std::string& key) const;
    nlohmann::json root_;
};

}  // namespace cgx
