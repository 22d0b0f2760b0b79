#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gapnet/errors.hpp"
#include "gapnet/model.hpp"

namespace gapnet {

// Every knob of a run, with paper-scale defaults. Parsed from flat
// `key = value` text ('#' comments); unknown keys are rejected.
struct RunConfig {
    std::string task = "classify";  // classify | segment

    // data
    std::string train_manifest;
    std::string test_manifest;
    std::size_t num_points = 1024;

    // graph
    std::size_t k = 20;

    // model
    std::size_t heads = 4;
    std::size_t channels = 16;
    std::size_t gap2_channels = 128;
    std::size_t stn_channels = 16;
    std::size_t width_divisor = 1;
    std::size_t num_classes = 40;
    std::size_t num_parts = 50;
    std::string part_sets;  // "0,1;2,3" per category; empty = one category of all parts
    double dropout_keep = 0.5;
    double seg_dropout_keep = 0.4;
    bool constant_coefficients = false;
    bool disable_attention_pooling = false;

    // training
    std::size_t batch_size = 32;
    std::size_t epochs = 100;
    std::uint64_t seed = 1;
    double lr0 = 0.005;
    std::size_t lr_decay_every = 20;
    double lr_floor = 1e-5;
    double bn_momentum_start = 0.7;
    double bn_momentum_end = 0.99;
    std::size_t bn_ramp_epochs = 100;
    bool augment = true;
    bool rotate = true;
    double scale_lo = 0.8;
    double scale_hi = 1.25;
    double jitter_sigma = 0.01;
    double jitter_clip = 0.05;

    // synth
    std::string synth_classes = "sphere,cube,plane,dumbbell";
    std::size_t synth_clouds = 100;
    std::size_t synth_points = 1024;

    std::string out = "runs/default";
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config field " + key + ": expected a boolean, got '" + v + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    std::istringstream ss(v);
    T out;
    ss >> out;
    std::string rest;
    if (!ss || (ss >> rest)) {
        throw ConfigError("config field " + key + ": bad value '" + v + "'");
    }
    return out;
}

}  // namespace detail

inline void apply_config_entry(RunConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_number;
    if (key == "task") c.task = value;
    else if (key == "train_manifest") c.train_manifest = value;
    else if (key == "test_manifest") c.test_manifest = value;
    else if (key == "num_points") c.num_points = parse_number<std::size_t>(key, value);
    else if (key == "k") c.k = parse_number<std::size_t>(key, value);
    else if (key == "heads") c.heads = parse_number<std::size_t>(key, value);
    else if (key == "channels") c.channels = parse_number<std::size_t>(key, value);
    else if (key == "gap2_channels") c.gap2_channels = parse_number<std::size_t>(key, value);
    else if (key == "stn_channels") c.stn_channels = parse_number<std::size_t>(key, value);
    else if (key == "width_divisor") c.width_divisor = parse_number<std::size_t>(key, value);
    else if (key == "num_classes") c.num_classes = parse_number<std::size_t>(key, value);
    else if (key == "num_parts") c.num_parts = parse_number<std::size_t>(key, value);
    else if (key == "part_sets") c.part_sets = value;
    else if (key == "dropout_keep") c.dropout_keep = parse_number<double>(key, value);
    else if (key == "seg_dropout_keep") c.seg_dropout_keep = parse_number<double>(key, value);
    else if (key == "constant_coefficients") c.constant_coefficients = parse_bool(key, value);
    else if (key == "disable_attention_pooling") c.disable_attention_pooling = parse_bool(key, value);
    else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, value);
    else if (key == "epochs") c.epochs = parse_number<std::size_t>(key, value);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "lr0") c.lr0 = parse_number<double>(key, value);
    else if (key == "lr_decay_every") c.lr_decay_every = parse_number<std::size_t>(key, value);
    else if (key == "lr_floor") c.lr_floor = parse_number<double>(key, value);
    else if (key == "bn_momentum_start") c.bn_momentum_start = parse_number<double>(key, value);
    else if (key == "bn_momentum_end") c.bn_momentum_end = parse_number<double>(key, value);
    else if (key == "bn_ramp_epochs") c.bn_ramp_epochs = parse_number<std::size_t>(key, value);
    else if (key == "augment") c.augment = parse_bool(key, value);
    else if (key == "rotate") c.rotate = parse_bool(key, value);
    else if (key == "scale_lo") c.scale_lo = parse_number<double>(key, value);
    else if (key == "scale_hi") c.scale_hi = parse_number<double>(key, value);
    else if (key == "jitter_sigma") c.jitter_sigma = parse_number<double>(key, value);
    else if (key == "jitter_clip") c.jitter_clip = parse_number<double>(key, value);
    else if (key == "synth_classes") c.synth_classes = value;
    else if (key == "synth_clouds") c.synth_clouds = parse_number<std::size_t>(key, value);
    else if (key == "synth_points") c.synth_points = parse_number<std::size_t>(key, value);
    else if (key == "out") c.out = value;
    else throw ConfigError("unknown config key: " + key);
}

inline RunConfig parse_config_text(const std::string& text, RunConfig base = {}) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        apply_config_entry(base, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    }
    return base;
}

inline RunConfig load_config_file(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), std::move(base));
}

inline void validate_config(const RunConfig& c) {
    if (c.task != "classify" && c.task != "segment") {
        throw ConfigError("config field task: must be classify or segment, got '" + c.task + "'");
    }
    if (c.num_points == 0) throw ConfigError("config field num_points: must be positive");
    if (c.k < 1 || c.k > c.num_points) {
        throw ConfigError("config field k: must lie in [1, num_points]");
    }
    if (c.heads == 0) throw ConfigError("config field heads: must be positive");
    if (c.channels == 0) throw ConfigError("config field channels: must be positive");
    if (c.width_divisor == 0) throw ConfigError("config field width_divisor: must be positive");
    if (c.num_classes < 2) throw ConfigError("config field num_classes: need at least 2");
    if (c.num_parts < 2) throw ConfigError("config field num_parts: need at least 2");
    if (!(c.dropout_keep > 0 && c.dropout_keep <= 1)) {
        throw ConfigError("config field dropout_keep: must lie in (0,1]");
    }
    if (!(c.seg_dropout_keep > 0 && c.seg_dropout_keep <= 1)) {
        throw ConfigError("config field seg_dropout_keep: must lie in (0,1]");
    }
    if (c.batch_size == 0) throw ConfigError("config field batch_size: must be positive");
    if (!(c.lr0 > 0)) throw ConfigError("config field lr0: must be positive");
    if (c.lr_decay_every == 0) throw ConfigError("config field lr_decay_every: must be positive");
    if (!(c.scale_lo > 0) || c.scale_lo > c.scale_hi) {
        throw ConfigError("config field scale_lo/scale_hi: need 0 < lo <= hi");
    }
    if (c.jitter_sigma < 0) throw ConfigError("config field jitter_sigma: must be >= 0");
    if (!(c.bn_momentum_start > 0 && c.bn_momentum_start <= c.bn_momentum_end &&
          c.bn_momentum_end < 1)) {
        throw ConfigError("config field bn_momentum_start/end: need 0 < start <= end < 1");
    }
    if (c.bn_ramp_epochs == 0) throw ConfigError("config field bn_ramp_epochs: must be positive");
}

inline std::string serialize_config(const RunConfig& c) {
    std::ostringstream o;
    o << "task = " << c.task << "\n";
    o << "train_manifest = " << c.train_manifest << "\n";
    o << "test_manifest = " << c.test_manifest << "\n";
    o << "num_points = " << c.num_points << "\n";
    o << "k = " << c.k << "\n";
    o << "heads = " << c.heads << "\n";
    o << "channels = " << c.channels << "\n";
    o << "gap2_channels = " << c.gap2_channels << "\n";
    o << "stn_channels = " << c.stn_channels << "\n";
    o << "width_divisor = " << c.width_divisor << "\n";
    o << "num_classes = " << c.num_classes << "\n";
    o << "num_parts = " << c.num_parts << "\n";
    o << "part_sets = " << c.part_sets << "\n";
    o << "dropout_keep = " << c.dropout_keep << "\n";
    o << "seg_dropout_keep = " << c.seg_dropout_keep << "\n";
    o << "constant_coefficients = " << (c.constant_coefficients ? "true" : "false") << "\n";
    o << "disable_attention_pooling = " << (c.disable_attention_pooling ? "true" : "false") << "\n";
    o << "batch_size = " << c.batch_size << "\n";
    o << "epochs = " << c.epochs << "\n";
    o << "seed = " << c.seed << "\n";
    o << "lr0 = " << c.lr0 << "\n";
    o << "lr_decay_every = " << c.lr_decay_every << "\n";
    o << "lr_floor = " << c.lr_floor << "\n";
    o << "bn_momentum_start = " << c.bn_momentum_start << "\n";
    o << "bn_momentum_end = " << c.bn_momentum_end << "\n";
    o << "bn_ramp_epochs = " << c.bn_ramp_epochs << "\n";
    o << "augment = " << (c.augment ? "true" : "false") << "\n";
    o << "rotate = " << (c.rotate ? "true" : "false") << "\n";
    o << "scale_lo = " << c.scale_lo << "\n";
    o << "scale_hi = " << c.scale_hi << "\n";
    o << "jitter_sigma = " << c.jitter_sigma << "\n";
    o << "jitter_clip = " << c.jitter_clip << "\n";
    o << "synth_classes = " << c.synth_classes << "\n";
    o << "synth_clouds = " << c.synth_clouds << "\n";
    o << "synth_points = " << c.synth_points << "\n";
    o << "out = " << c.out << "\n";
    return o.str();
}

inline std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(s);
    while (std::getline(ss, item, sep)) {
        item = detail::trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// "0,1;2,3,4" -> one part-id list per category. Empty means a single
// category owning all num_parts ids.
inline std::vector<std::vector<int>> parse_part_sets(const std::string& spec,
                                                     std::size_t num_parts) {
    std::vector<std::vector<int>> out;
    if (spec.empty()) {
        out.emplace_back();
        for (std::size_t p = 0; p < num_parts; ++p) out[0].push_back(static_cast<int>(p));
        return out;
    }
    for (const auto& group : split_list(spec, ';')) {
        std::vector<int> parts;
        for (const auto& tok : split_list(group, ',')) {
            parts.push_back(detail::parse_number<int>("part_sets", tok));
        }
        if (parts.empty()) throw ConfigError("config field part_sets: empty category group");
        out.push_back(std::move(parts));
    }
    return out;
}

// Scales a paper width down for desk-scale runs, never below 1.
inline std::size_t scaled(std::size_t width, std::size_t divisor) {
    return std::max<std::size_t>(1, width / divisor);
}

inline ClassifierConfig classifier_config(const RunConfig& c) {
    ClassifierConfig m;
    m.num_classes = c.num_classes;
    m.heads = c.heads;
    m.channels = c.channels;
    m.stn_channels = scaled(c.stn_channels, c.width_divisor);
    const std::size_t d = c.width_divisor;
    m.stn_mlp_widths = {scaled(64, d), scaled(128, d), scaled(1024, d)};
    m.stn_fc_widths = {scaled(512, d), scaled(256, d)};
    m.mlp_widths = {scaled(64, d), scaled(64, d), scaled(64, d), scaled(128, d)};
    m.fuse_width = scaled(1024, d);
    m.head_widths = {scaled(512, d), scaled(256, d)};
    m.dropout_keep = c.dropout_keep;
    m.constant_coefficients = c.constant_coefficients;
    m.attention_pooling = !c.disable_attention_pooling;
    return m;
}

inline SegmenterConfig segmenter_config(const RunConfig& c) {
    SegmenterConfig m;
    m.num_parts = c.num_parts;
    m.heads = c.heads;
    m.channels = c.channels;
    m.gap2_channels = scaled(c.gap2_channels, c.width_divisor);
    m.stn_channels = scaled(c.stn_channels, c.width_divisor);
    const std::size_t d = c.width_divisor;
    m.stn_mlp_widths = {scaled(64, d), scaled(128, d), scaled(1024, d)};
    m.stn_fc_widths = {scaled(512, d), scaled(256, d)};
    m.mlp1_widths = {scaled(64, d), scaled(64, d), scaled(128, d)};
    m.mlp2_widths = {scaled(128, d), scaled(128, d), scaled(512, d)};
    m.fuse_width = scaled(1024, d);
    m.head_widths = {scaled(256, d), scaled(256, d), scaled(128, d)};
    m.dropout_keep = c.seg_dropout_keep;
    m.constant_coefficients = c.constant_coefficients;
    m.attention_pooling = !c.disable_attention_pooling;
    return m;
}

}  // namespace gapnet
