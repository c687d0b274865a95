#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sail/trainer.hpp"

namespace sail {

// Minimal TOML subset: `[section]` headers, `key = value` lines, `#` comments.
// Values are bare numbers, true/false, or double-quoted strings.

struct ConfigEntry {
    std::string key;  ///< "section.key" or "key" at top level
    std::string value;
    std::size_t line = 0;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_str = !in_str;
        if (line[i] == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

inline double to_double(const ConfigEntry& e) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
    if (ec != std::errc{} || p != e.value.data() + e.value.size() || !std::isfinite(v)) {
        throw ConfigError("line " + std::to_string(e.line) + ": " + e.key + " expects a number, got " + e.value);
    }
    return v;
}

inline std::uint64_t to_uint(const ConfigEntry& e) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
    if (ec != std::errc{} || p != e.value.data() + e.value.size()) {
        throw ConfigError("line " + std::to_string(e.line) + ": " + e.key + " expects a non-negative integer, got " + e.value);
    }
    return v;
}

inline bool to_bool(const ConfigEntry& e) {
    if (e.value == "true") return true;
    if (e.value == "false") return false;
    throw ConfigError("line " + std::to_string(e.line) + ": " + e.key + " expects true or false, got " + e.value);
}

inline std::string to_string(const ConfigEntry& e) {
    if (e.value.size() >= 2 && e.value.front() == '"' && e.value.back() == '"') return e.value.substr(1, e.value.size() - 2);
    return e.value;
}

inline void apply_head_key(HeadConfig& h, const std::string& field, const ConfigEntry& e) {
    if (field == "kind") h.kind = parse_head_kind(to_string(e));
    else if (field == "in_dim") h.in_dim = to_uint(e);
    else if (field == "out_dim") h.out_dim = to_uint(e);
    else if (field == "expansion") h.expansion = to_uint(e);
    else throw ConfigError("line " + std::to_string(e.line) + ": unknown key " + e.key);
}

} // namespace detail

inline std::vector<ConfigEntry> parse_config_entries(std::string_view text) {
    std::vector<ConfigEntry> out;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string line = detail::trim(detail::strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
            section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(std::string_view(line).substr(0, eq));
        std::string value = detail::trim(std::string_view(line).substr(eq + 1));
        if (key.empty() || value.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
        out.push_back({section.empty() ? key : section + "." + key, std::move(value), lineno});
    }
    return out;
}

/// Applies one override. `head.*` keys set both sides; `loss.temperature` sets t_log = log(value).
inline void apply_config_entry(TrainConfig& c, const ConfigEntry& e) {
    const auto& k = e.key;
    using namespace detail;
    if (k == "preset") c.preset = parse_preset(to_string(e));
    else if (k == "seed") c.seed = to_uint(e);
    else if (k == "epochs") c.epochs = to_uint(e);
    else if (k == "batch_size") c.batch_size = to_uint(e);
    else if (k == "eval_every") c.eval_every = to_uint(e);
    else if (k == "checkpoint_path") c.checkpoint_path = to_string(e);
    else if (k.rfind("image_head.", 0) == 0) apply_head_key(c.image_head, k.substr(11), e);
    else if (k.rfind("text_head.", 0) == 0) apply_head_key(c.text_head, k.substr(10), e);
    else if (k.rfind("head.", 0) == 0) {
        apply_head_key(c.image_head, k.substr(5), e);
        apply_head_key(c.text_head, k.substr(5), e);
    }
    else if (k == "loss.kind") c.loss.kind = parse_loss_kind(to_string(e));
    else if (k == "loss.normalization") c.loss.normalization = parse_normalization(to_string(e));
    else if (k == "loss.t_log") c.loss.t_log = to_double(e);
    else if (k == "loss.temperature") {
        const double t = to_double(e);
        if (!(t > 0.0)) throw ConfigError("line " + std::to_string(e.line) + ": loss.temperature must be > 0");
        c.loss.t_log = std::log(t);
    }
    else if (k == "loss.bias") c.loss.bias = to_double(e);
    else if (k == "loss.t_fixed_infonce") c.loss.t_fixed_infonce = to_double(e);
    else if (k == "loss.multi_positive") c.loss.multi_positive = to_bool(e);
    else if (k == "optim.lr") c.optim.lr = to_double(e);
    else if (k == "optim.beta1") c.optim.beta1 = to_double(e);
    else if (k == "optim.beta2") c.optim.beta2 = to_double(e);
    else if (k == "optim.weight_decay") c.optim.weight_decay = to_double(e);
    else throw ConfigError("line " + std::to_string(e.line) + ": unknown key " + k);
}

/// Starts from the named preset (default sail), then applies every other entry in order.
inline TrainConfig parse_train_config(std::string_view text, const std::vector<ConfigEntry>& overrides = {}) {
    auto entries = parse_config_entries(text);
    entries.insert(entries.end(), overrides.begin(), overrides.end());
    Preset preset = Preset::sail;
    for (const auto& e : entries) {
        if (e.key == "preset") preset = parse_preset(detail::to_string(e));
    }
    TrainConfig c = TrainConfig::for_preset(preset);
    for (const auto& e : entries) {
        if (e.key != "preset") apply_config_entry(c, e);
    }
    c.validate();
    return c;
}

inline TrainConfig load_train_config(const std::filesystem::path& path, const std::vector<ConfigEntry>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open config");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_train_config(ss.str(), overrides);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

/// Parses a command-line override of the form section.key=value.
inline ConfigEntry parse_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override \"" + kv + "\" is not key=value");
    return {detail::trim(std::string_view(kv).substr(0, eq)), detail::trim(std::string_view(kv).substr(eq + 1)), 0};
}

} // namespace sail
