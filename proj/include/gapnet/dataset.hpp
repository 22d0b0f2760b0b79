#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gapnet/errors.hpp"
#include "gapnet/rng.hpp"
#include "gapnet/tensor.hpp"

namespace gapnet {

template <typename S>
struct PointCloud {
    Tensor<S> points;             // [N,3]
    int label = -1;               // class index, -1 if absent
    int category = -1;            // shape-category index, -1 if absent
    std::vector<int> part_labels; // per-point, empty if absent
    bool degenerate = false;      // set when normalization hit an all-identical cloud

    std::size_t size() const { return points.shape.empty() ? 0 : points.shape[0]; }
    bool has_parts() const { return !part_labels.empty(); }
};

struct ManifestEntry {
    std::string path;  // resolved, loadable as-is
    int label = 0;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> class_names;
};

// One point per line, "x y z [part_label]", '#' starts a comment line.
template <typename S>
PointCloud<S> load_cloud(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open point file: " + path);
    std::vector<S> coords;
    std::vector<int> parts;
    std::string line;
    std::size_t lineno = 0;
    bool labeled = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        double x, y, z;
        if (!(ls >> x)) {
            if (ls.eof()) continue;  // blank or comment-only line
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected a number");
        }
        if (!(ls >> y >> z)) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected 3 coordinates");
        }
        long part;
        if (ls >> part) {
            if (!parts.empty() || coords.empty()) {
                parts.push_back(static_cast<int>(part));
                labeled = true;
            } else {
                throw ParseError(path + ":" + std::to_string(lineno) +
                                 ": part label column appears mid-file");
            }
        } else if (labeled) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": missing part label");
        }
        std::string rest;
        if (ls.clear(), ls >> rest) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": trailing token '" + rest +
                             "'");
        }
        coords.push_back(static_cast<S>(x));
        coords.push_back(static_cast<S>(y));
        coords.push_back(static_cast<S>(z));
    }
    if (coords.empty()) throw DataError("empty point file: " + path);
    PointCloud<S> cloud;
    const std::size_t n = coords.size() / 3;
    cloud.points = Tensor<S>(Shape{n, 3}, std::move(coords));
    cloud.part_labels = std::move(parts);
    if (cloud.has_parts() && cloud.part_labels.size() != n) {
        throw ParseError(path + ": part labels cover " + std::to_string(cloud.part_labels.size()) +
                         " of " + std::to_string(n) + " points");
    }
    return cloud;
}

template <typename S>
void save_cloud(const std::string& path, const PointCloud<S>& cloud) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write point file: " + path);
    char buf[128];
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.has_parts()) {
            std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f %d\n",
                          static_cast<double>(cloud.points.at2(i, 0)),
                          static_cast<double>(cloud.points.at2(i, 1)),
                          static_cast<double>(cloud.points.at2(i, 2)), cloud.part_labels[i]);
        } else {
            std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f\n",
                          static_cast<double>(cloud.points.at2(i, 0)),
                          static_cast<double>(cloud.points.at2(i, 1)),
                          static_cast<double>(cloud.points.at2(i, 2)));
        }
        out << buf;
    }
}

// Centers at the centroid, then scales so the farthest point sits on the
// unit sphere. An all-identical cloud cannot be scaled; it is centered and
// flagged instead.
template <typename S>
PointCloud<S> normalize_unit_sphere(PointCloud<S> cloud) {
    const std::size_t n = cloud.size();
    double cx = 0, cy = 0, cz = 0;
    for (std::size_t i = 0; i < n; ++i) {
        cx += cloud.points.at2(i, 0);
        cy += cloud.points.at2(i, 1);
        cz += cloud.points.at2(i, 2);
    }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    cz /= static_cast<double>(n);
    double max_sq = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = cloud.points.at2(i, 0) - cx;
        const double y = cloud.points.at2(i, 1) - cy;
        const double z = cloud.points.at2(i, 2) - cz;
        max_sq = std::max(max_sq, x * x + y * y + z * z);
    }
    const double max_norm = std::sqrt(max_sq);
    const double inv = max_norm > 0 ? 1.0 / max_norm : 1.0;
    cloud.degenerate = max_norm == 0;
    for (std::size_t i = 0; i < n; ++i) {
        cloud.points.at2(i, 0) = static_cast<S>((cloud.points.at2(i, 0) - cx) * inv);
        cloud.points.at2(i, 1) = static_cast<S>((cloud.points.at2(i, 1) - cy) * inv);
        cloud.points.at2(i, 2) = static_cast<S>((cloud.points.at2(i, 2) - cz) * inv);
    }
    return cloud;
}

// Uniform draw of n points. Without replacement when the cloud is large
// enough; otherwise whole shuffled passes are concatenated so every original
// point still appears. Part labels travel with their points.
template <typename S>
PointCloud<S> sample_points(const PointCloud<S>& cloud, std::size_t n, std::mt19937& rng) {
    if (n == 0) throw std::domain_error("sample_points: n must be positive");
    const std::size_t N = cloud.size();
    std::vector<std::uint32_t> pick;
    pick.reserve(n);
    std::vector<std::uint32_t> order(N);
    while (pick.size() < n) {
        for (std::size_t i = 0; i < N; ++i) order[i] = static_cast<std::uint32_t>(i);
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t take = std::min(N, n - pick.size());
        pick.insert(pick.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
    }
    PointCloud<S> out;
    out.label = cloud.label;
    out.category = cloud.category;
    out.degenerate = cloud.degenerate;
    out.points = Tensor<S>(Shape{n, 3});
    if (cloud.has_parts()) out.part_labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t src = pick[i];
        out.points.at2(i, 0) = cloud.points.at2(src, 0);
        out.points.at2(i, 1) = cloud.points.at2(src, 1);
        out.points.at2(i, 2) = cloud.points.at2(src, 2);
        if (cloud.has_parts()) out.part_labels[i] = cloud.part_labels[src];
    }
    return out;
}

struct AugmentOptions {
    bool rotate = true;
    double scale_lo = 0.8;
    double scale_hi = 1.25;
    double jitter_sigma = 0.01;
    double jitter_clip = 0.05;
};

// Applies, in order: rotation about the gravity (z) axis, isotropic scale,
// clipped Gaussian jitter. Neutral knobs leave the cloud bit-identical.
template <typename S>
PointCloud<S> augment(PointCloud<S> cloud, std::mt19937& rng, const AugmentOptions& opt) {
    if (!(opt.scale_lo > 0) || opt.scale_lo > opt.scale_hi) {
        throw std::domain_error("augment: scale range must satisfy 0 < lo <= hi");
    }
    const std::size_t n = cloud.size();
    if (opt.rotate) {
        std::uniform_real_distribution<double> ud(0.0, 2.0 * std::numbers::pi);
        const double a = ud(rng);
        const S c = static_cast<S>(std::cos(a));
        const S s = static_cast<S>(std::sin(a));
        for (std::size_t i = 0; i < n; ++i) {
            const S x = cloud.points.at2(i, 0);
            const S y = cloud.points.at2(i, 1);
            cloud.points.at2(i, 0) = c * x - s * y;
            cloud.points.at2(i, 1) = s * x + c * y;
        }
    }
    if (opt.scale_lo < opt.scale_hi) {
        std::uniform_real_distribution<double> us(opt.scale_lo, opt.scale_hi);
        const S f = static_cast<S>(us(rng));
        for (auto& v : cloud.points.data) v *= f;
    } else if (opt.scale_lo != 1.0) {
        const S f = static_cast<S>(opt.scale_lo);
        for (auto& v : cloud.points.data) v *= f;
    }
    if (opt.jitter_sigma > 0) {
        std::normal_distribution<double> nd(0.0, opt.jitter_sigma);
        for (auto& v : cloud.points.data) {
            const double j = std::clamp(nd(rng), -opt.jitter_clip, opt.jitter_clip);
            v += static_cast<S>(j);
        }
    }
    return cloud;
}

// --- synthetic generators (desk-scale stand-ins for scanned shapes) ---

namespace synth {

template <typename S>
PointCloud<S> sphere(std::size_t n, std::mt19937& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    PointCloud<S> c;
    c.points = Tensor<S>(Shape{n, 3});
    for (std::size_t i = 0; i < n; ++i) {
        double x = nd(rng), y = nd(rng), z = nd(rng);
        double r = std::sqrt(x * x + y * y + z * z);
        if (r < 1e-12) {
            x = 1;
            y = z = 0;
            r = 1;
        }
        c.points.at2(i, 0) = static_cast<S>(x / r);
        c.points.at2(i, 1) = static_cast<S>(y / r);
        c.points.at2(i, 2) = static_cast<S>(z / r);
    }
    return c;
}

template <typename S>
PointCloud<S> cube(std::size_t n, std::mt19937& rng) {
    std::uniform_int_distribution<int> face(0, 5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    PointCloud<S> c;
    c.points = Tensor<S>(Shape{n, 3});
    for (std::size_t i = 0; i < n; ++i) {
        const int f = face(rng);
        const double a = u(rng), b = u(rng);
        double p[3];
        p[f / 2] = f % 2 ? 1.0 : -1.0;
        p[(f / 2 + 1) % 3] = a;
        p[(f / 2 + 2) % 3] = b;
        c.points.at2(i, 0) = static_cast<S>(p[0]);
        c.points.at2(i, 1) = static_cast<S>(p[1]);
        c.points.at2(i, 2) = static_cast<S>(p[2]);
    }
    return c;
}

template <typename S>
PointCloud<S> plane(std::size_t n, std::mt19937& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    PointCloud<S> c;
    c.points = Tensor<S>(Shape{n, 3});
    for (std::size_t i = 0; i < n; ++i) {
        c.points.at2(i, 0) = static_cast<S>(u(rng));
        c.points.at2(i, 1) = static_cast<S>(u(rng));
        c.points.at2(i, 2) = S(0);
    }
    return c;
}

// Two-part dumbbell: a large lobe (part 0) and a small lobe (part 1) joined
// by a bar whose points belong to the nearer lobe. The size asymmetry keeps
// the parts distinguishable under rotation augmentation.
template <typename S>
PointCloud<S> dumbbell(std::size_t n, std::mt19937& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_real_distribution<double> ubar(-0.8, 0.8);
    std::uniform_real_distribution<double> uang(0.0, 2.0 * std::numbers::pi);
    PointCloud<S> c;
    c.points = Tensor<S>(Shape{n, 3});
    c.part_labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double pick = u01(rng);
        double x, y, z;
        int part;
        if (pick < 0.45) {  // large lobe at -x
            double a = nd(rng), b = nd(rng), d = nd(rng);
            double r = std::max(1e-12, std::sqrt(a * a + b * b + d * d));
            x = -0.8 + 0.55 * a / r;
            y = 0.55 * b / r;
            z = 0.55 * d / r;
            part = 0;
        } else if (pick < 0.70) {  // small lobe at +x
            double a = nd(rng), b = nd(rng), d = nd(rng);
            double r = std::max(1e-12, std::sqrt(a * a + b * b + d * d));
            x = 0.8 + 0.35 * a / r;
            y = 0.35 * b / r;
            z = 0.35 * d / r;
            part = 1;
        } else {  // connecting bar
            x = ubar(rng);
            const double ang = uang(rng);
            y = 0.12 * std::cos(ang);
            z = 0.12 * std::sin(ang);
            part = x < 0 ? 0 : 1;
        }
        c.points.at2(i, 0) = static_cast<S>(x);
        c.points.at2(i, 1) = static_cast<S>(y);
        c.points.at2(i, 2) = static_cast<S>(z);
        c.part_labels[i] = part;
    }
    return c;
}

template <typename S>
PointCloud<S> generate(const std::string& name, std::size_t n, std::mt19937& rng) {
    if (name == "sphere") return sphere<S>(n, rng);
    if (name == "cube") return cube<S>(n, rng);
    if (name == "plane") return plane<S>(n, rng);
    if (name == "dumbbell") return dumbbell<S>(n, rng);
    throw ConfigError("unknown shape generator: " + name);
}

}  // namespace synth

inline void write_manifest(const std::string& path, const std::vector<std::pair<std::string, int>>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest: " + path);
    for (const auto& [rel, label] : rows) out << rel << '\t' << label << '\n';
}

// One "relative/path<TAB>label" per line; paths resolve against the
// manifest's own directory.
inline DatasetManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    const auto dir = std::filesystem::path(path).parent_path();
    DatasetManifest m;
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected path<TAB>label");
        }
        const std::string rel = line.substr(0, tab);
        int label;
        try {
            label = std::stoi(line.substr(tab + 1));
        } catch (const std::exception&) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": bad label field");
        }
        if (std::find(seen.begin(), seen.end(), rel) != seen.end()) {
            throw DataError(path + ":" + std::to_string(lineno) + ": duplicate path " + rel);
        }
        seen.push_back(rel);
        m.entries.push_back({(dir / rel).string(), label});
    }
    return m;
}

// Writes a balanced synthetic dataset (round-robin over the class list)
// under out_dir/clouds plus out_dir/manifest.tsv.
template <typename S>
DatasetManifest synth_dataset(const std::vector<std::string>& classes, std::size_t n_points,
                              std::size_t n_clouds, std::uint64_t seed,
                              const std::string& out_dir) {
    if (classes.empty()) throw ConfigError("synth: empty class list");
    if (n_clouds == 0) throw ConfigError("synth: n_clouds must be positive");
    if (n_points == 0) throw ConfigError("synth: n_points must be positive");
    for (const auto& name : classes) {
        std::mt19937 probe = make_rng(derive_seed(seed, 0xC0FFEE));
        synth::generate<S>(name, 1, probe);  // validates the generator name
    }
    const auto clouds_dir = std::filesystem::path(out_dir) / "clouds";
    std::filesystem::create_directories(clouds_dir);
    DatasetManifest m;
    m.class_names = classes;
    std::vector<std::pair<std::string, int>> rows;
    char name[64];
    for (std::size_t i = 0; i < n_clouds; ++i) {
        const int label = static_cast<int>(i % classes.size());
        std::mt19937 rng = make_rng(derive_seed(seed, i));
        PointCloud<S> cloud = synth::generate<S>(classes[static_cast<std::size_t>(label)],
                                                 n_points, rng);
        std::snprintf(name, sizeof(name), "clouds/%s_%04zu.xyz",
                      classes[static_cast<std::size_t>(label)].c_str(), i);
        save_cloud((std::filesystem::path(out_dir) / name).string(), cloud);
        rows.emplace_back(name, label);
        m.entries.push_back({(std::filesystem::path(out_dir) / name).string(), label});
    }
    write_manifest((std::filesystem::path(out_dir) / "manifest.tsv").string(), rows);
    return m;
}

}  // namespace gapnet
