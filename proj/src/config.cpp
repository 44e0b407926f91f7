#include "cgx/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

extern char** environ;

namespace cgx {

namespace {

std::vector<std::string> split_key(const std::string& key) {
    std::vector<std::string> parts;
    std::stringstream ss(key);
    std::string part;
    while (std::getline(ss, part, '.'))
        if (!part.empty()) parts.push_back(part);
    return parts;
}

nlohmann::json parse_env_value(const std::string& v) {
    // Try JSON first so numbers, bools and arrays round-trip; fall back to string.
    try {
        return nlohmann::json::parse(v);
    } catch (const nlohmann::json::parse_error&) {
        return nlohmann::json(v);
    }
}

}  // namespace

Config Config::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config file not found: " + path);
    nlohmann::json j;
    in >> j;
    return Config(std::move(j));
}

void Config::apply_env_overrides() {
    for (char** env = environ; *env != nullptr; ++env) {
        std::string entry(*env);
        if (entry.rfind("CGX_", 0) != 0) continue;
        auto eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string name = entry.substr(4, eq - 4);
        std::string value = entry.substr(eq + 1);
        std::string key;
        for (size_t i = 0; i < name.size(); ++i) {
            if (name[i] == '_' && i + 1 < name.size() && name[i + 1] == '_') {
                key += '.';
                ++i;
            } else {
                key += static_cast<char>(std::tolower(static_cast<unsigned char>(name[i])));
            }
        }
        set(key, parse_env_value(value));
    }
}

const nlohmann::json* Config::find(const std::string& key) const {
    const nlohmann::json* node = &root_;
    for (const auto& part : split_key(key)) {
        if (!node->is_object() || !node->contains(part)) return nullptr;
        node = &(*node)[part];
    }
    return node;
}

bool Config::has(const std::string& key) const { return find(key) != nullptr; }

double Config::get_double(const std::string& key, double fallback) const {
    const auto* n = find(key);
    return n && n->is_number() ? n->get<double>() : fallback;
}

int64_t Config::get_int(const std::string& key, int64_t fallback) const {
    const auto* n = find(key);
    return n && n->is_number() ? n->get<int64_t>() : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    const auto* n = find(key);
    return n && n->is_boolean() ? n->get<bool>() : fallback;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    const auto* n = find(key);
    return n && n->is_string() ? n->get<std::string>() : fallback;
}

std::vector<double> Config::get_double_list(const std::string& key, std::vector<double> fallback) const {
    const auto* n = find(key);
    if (!n || !n->is_array()) return fallback;
    std::vector<double> out;
    for (const auto& v : *n) out.push_back(v.get<double>());
    return out;
}

std::string Config::require_string(const std::string& key) const {
    const auto* n = find(key);
    if (!n || !n->is_string() || n->get<std::string>().empty())
        throw std::invalid_argument("missing required config key: " + key);
    return n->get<std::string>();
}

void Config::set(const std::string& key, nlohmann::json value) {
    nlohmann::json* node = &root_;
    auto parts = split_key(key);
    for (size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object())
            (*node)[parts[i]] = nlohmann::json::object();
        node = &(*node)[parts[i]];
    }
    if (!parts.empty()) (*node)[parts.back()] = std::move(value);
}

}  // namespace cgx
