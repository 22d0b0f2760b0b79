#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "gapnet/dataset.hpp"
#include "gapnet/rng.hpp"

using namespace gapnet;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

void write_file(const std::filesystem::path& p, const std::string& body) {
    std::ofstream(p) << body;
}

template <typename S>
PointCloud<S> random_cloud(std::size_t n, std::mt19937& rng) {
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    PointCloud<S> c;
    c.points = Tensor<S>(Shape{n, 3});
    for (auto& v : c.points.data) v = static_cast<S>(u(rng));
    return c;
}

double norm_of(const PointCloud<float>& c, std::size_t i) {
    const double x = c.points.at2(i, 0), y = c.points.at2(i, 1), z = c.points.at2(i, 2);
    return std::sqrt(x * x + y * y + z * z);
}

}  // namespace

TEST_CASE("point file parsing", "[dataset]") {
    SECTION("two plain points") {
        const auto p = temp_file("gapnet_two.xyz");
        write_file(p, "0 0 0\n1 0 0\n");
        const auto c = load_cloud<float>(p.string());
        REQUIRE(c.size() == 2);
        CHECK(c.points.at2(1, 0) == 1.0f);
        CHECK_FALSE(c.has_parts());
    }
    SECTION("fourth column becomes part labels") {
        const auto p = temp_file("gapnet_parts.xyz");
        write_file(p, "# header comment\n0 0 0 1\n1 0 0 7\n");
        const auto c = load_cloud<float>(p.string());
        REQUIRE(c.has_parts());
        CHECK(c.part_labels == std::vector<int>{1, 7});
    }
    SECTION("non-numeric token names the line") {
        const auto p = temp_file("gapnet_bad.xyz");
        write_file(p, "0 0 0\n1 oops 0\n");
        CHECK_THROWS_WITH(load_cloud<float>(p.string()),
                          Catch::Matchers::ContainsSubstring(":2:"));
    }
    SECTION("empty file is a data error") {
        const auto p = temp_file("gapnet_empty.xyz");
        write_file(p, "# nothing here\n");
        CHECK_THROWS_AS(load_cloud<float>(p.string()), DataError);
    }
    SECTION("save and reload round-trips") {
        const auto p = temp_file("gapnet_roundtrip.xyz");
        std::mt19937 rng = make_rng(3);
        PointCloud<float> c = random_cloud<float>(10, rng);
        c.part_labels.assign(10, 1);
        save_cloud(p.string(), c);
        const auto back = load_cloud<float>(p.string());
        REQUIRE(back.size() == 10);
        for (std::size_t i = 0; i < 30; ++i) {
            CHECK(back.points[i] == Catch::Approx(c.points[i]).margin(1e-6));
        }
        CHECK(back.part_labels == c.part_labels);
    }
}

TEST_CASE("unit sphere normalization", "[dataset]") {
    SECTION("symmetric pair lands on -1 and 1") {
        PointCloud<float> c;
        c.points = Tensor<float>(Shape{2, 3}, {0, 0, 0, 2, 0, 0});
        const auto n = normalize_unit_sphere(c);
        CHECK(n.points.at2(0, 0) == Catch::Approx(-1.0));
        CHECK(n.points.at2(1, 0) == Catch::Approx(1.0));
    }
    SECTION("idempotent within 1e-7") {
        std::mt19937 rng = make_rng(5);
        const auto once = normalize_unit_sphere(random_cloud<float>(50, rng));
        const auto twice = normalize_unit_sphere(once);
        for (std::size_t i = 0; i < once.points.size(); ++i) {
            CHECK(twice.points[i] == Catch::Approx(once.points[i]).margin(1e-7));
        }
    }
    SECTION("max norm is 1 after the call") {
        std::mt19937 rng = make_rng(6);
        const auto n = normalize_unit_sphere(random_cloud<float>(100, rng));
        double max_norm = 0;
        for (std::size_t i = 0; i < 100; ++i) max_norm = std::max(max_norm, norm_of(n, i));
        CHECK(max_norm == Catch::Approx(1.0).margin(1e-6));
    }
    SECTION("translation invariance") {
        std::mt19937 rng = make_rng(7);
        const auto base = random_cloud<float>(40, rng);
        PointCloud<float> moved = base;
        for (std::size_t i = 0; i < 40; ++i) {
            moved.points.at2(i, 0) += 11.0f;
            moved.points.at2(i, 1) -= 4.0f;
            moved.points.at2(i, 2) += 2.5f;
        }
        const auto a = normalize_unit_sphere(base);
        const auto b = normalize_unit_sphere(moved);
        for (std::size_t i = 0; i < a.points.size(); ++i) {
            CHECK(a.points[i] == Catch::Approx(b.points[i]).margin(1e-6));
        }
    }
    SECTION("all-identical cloud is centered and flagged") {
        PointCloud<float> c;
        c.points = Tensor<float>(Shape{3, 3}, {2, 2, 2, 2, 2, 2, 2, 2, 2});
        const auto n = normalize_unit_sphere(c);
        CHECK(n.degenerate);
        for (float v : n.points.data) CHECK(v == 0.0f);
    }
}

TEST_CASE("point sampling", "[dataset]") {
    std::mt19937 rng = make_rng(11);
    auto cloud = random_cloud<float>(8, rng);
    cloud.part_labels = {0, 1, 2, 3, 4, 5, 6, 7};

    SECTION("n equal to N is a permutation") {
        std::mt19937 r = make_rng(1);
        const auto s = sample_points(cloud, 8, r);
        auto labels = s.part_labels;
        std::sort(labels.begin(), labels.end());
        CHECK(labels == cloud.part_labels);
    }
    SECTION("oversampling covers every original point") {
        PointCloud<float> two;
        two.points = Tensor<float>(Shape{2, 3}, {0, 0, 0, 1, 1, 1});
        two.part_labels = {0, 1};
        std::mt19937 r = make_rng(2);
        const auto s = sample_points(two, 4, r);
        REQUIRE(s.size() == 4);
        int zero = 0, one = 0;
        for (int l : s.part_labels) (l == 0 ? zero : one)++;
        CHECK(zero >= 1);
        CHECK(one >= 1);
    }
    SECTION("seeded twice gives the identical selection") {
        std::mt19937 r1 = make_rng(9), r2 = make_rng(9);
        CHECK(sample_points(cloud, 5, r1).points.data ==
              sample_points(cloud, 5, r2).points.data);
    }
    SECTION("zero samples is a domain error") {
        std::mt19937 r = make_rng(3);
        CHECK_THROWS_AS(sample_points(cloud, 0, r), std::domain_error);
    }
}

TEST_CASE("augmentation", "[dataset]") {
    std::mt19937 rng = make_rng(21);
    const auto cloud = random_cloud<float>(64, rng);

    SECTION("neutral knobs are the identity") {
        AugmentOptions opt;
        opt.rotate = false;
        opt.scale_lo = opt.scale_hi = 1.0;
        opt.jitter_sigma = 0.0;
        std::mt19937 r = make_rng(4);
        const auto a = augment(cloud, r, opt);
        CHECK(a.points.data == cloud.points.data);
    }
    SECTION("rotation preserves norms within 1e-6") {
        AugmentOptions opt;
        opt.scale_lo = opt.scale_hi = 1.0;
        opt.jitter_sigma = 0.0;
        std::mt19937 r = make_rng(5);
        const auto a = augment(cloud, r, opt);
        for (std::size_t i = 0; i < 64; ++i) {
            CHECK(norm_of(a, i) == Catch::Approx(norm_of(cloud, i)).margin(1e-6));
        }
    }
    SECTION("jitter never exceeds the clip") {
        AugmentOptions opt;
        opt.rotate = false;
        opt.scale_lo = opt.scale_hi = 1.0;
        opt.jitter_sigma = 0.04;
        opt.jitter_clip = 0.05;
        std::mt19937 r = make_rng(6);
        PointCloud<float> big = random_cloud<float>(100000, r);
        std::mt19937 jr = make_rng(7);
        const auto a = augment(big, jr, opt);
        float worst = 0;
        for (std::size_t i = 0; i < a.points.size(); ++i) {
            worst = std::max(worst, std::fabs(a.points[i] - big.points[i]));
        }
        CHECK(worst <= 0.05f + 1e-7f);
        CHECK(worst > 0.0f);
    }
    SECTION("invalid scale range is a domain error") {
        AugmentOptions opt;
        opt.scale_lo = 1.5;
        opt.scale_hi = 0.5;
        std::mt19937 r = make_rng(8);
        CHECK_THROWS_AS(augment(cloud, r, opt), std::domain_error);
    }
    SECTION("reproducible under a fixed seed") {
        AugmentOptions opt;
        std::mt19937 r1 = make_rng(10), r2 = make_rng(10);
        CHECK(augment(cloud, r1, opt).points.data == augment(cloud, r2, opt).points.data);
    }
}

TEST_CASE("synthetic generators", "[dataset]") {
    std::mt19937 rng = make_rng(31);

    SECTION("sphere points sit at norm 1 before normalization") {
        auto c = synth::sphere<float>(200, rng);
        for (std::size_t i = 0; i < 200; ++i) {
            const double x = c.points.at2(i, 0), y = c.points.at2(i, 1), z = c.points.at2(i, 2);
            CHECK(std::sqrt(x * x + y * y + z * z) == Catch::Approx(1.0).margin(1e-6));
        }
    }
    SECTION("dumbbell carries both part labels") {
        auto c = synth::dumbbell<float>(300, rng);
        REQUIRE(c.has_parts());
        int zero = 0, one = 0;
        for (int l : c.part_labels) {
            REQUIRE((l == 0 || l == 1));
            (l == 0 ? zero : one)++;
        }
        CHECK(zero > 0);
        CHECK(one > 0);
    }
    SECTION("unknown generator is a config error") {
        CHECK_THROWS_AS(synth::generate<float>("torus", 10, rng), ConfigError);
    }
}

TEST_CASE("synthetic dataset writer", "[dataset]") {
    const auto dir = std::filesystem::temp_directory_path() / "gapnet_synth_test";
    std::filesystem::remove_all(dir);

    SECTION("balanced classes and a readable manifest") {
        const auto m = synth_dataset<float>({"sphere", "cube", "plane", "dumbbell"}, 32, 100, 7,
                                            dir.string());
        CHECK(m.entries.size() == 100);
        std::vector<int> counts(4, 0);
        for (const auto& e : m.entries) counts[static_cast<std::size_t>(e.label)]++;
        CHECK(counts == std::vector<int>{25, 25, 25, 25});

        const auto back = read_manifest((dir / "manifest.tsv").string());
        REQUIRE(back.entries.size() == 100);
        const auto c = load_cloud<float>(back.entries[0].path);
        CHECK(c.size() == 32);
    }
    SECTION("same seed reproduces identical bytes") {
        const auto dir_a = dir / "a";
        const auto dir_b = dir / "b";
        synth_dataset<float>({"sphere", "cube"}, 16, 6, 99, dir_a.string());
        synth_dataset<float>({"sphere", "cube"}, 16, 6, 99, dir_b.string());
        for (const auto& entry : std::filesystem::recursive_directory_iterator(dir_a)) {
            if (!entry.is_regular_file()) continue;
            const auto rel = std::filesystem::relative(entry.path(), dir_a);
            std::ifstream fa(entry.path()), fb(dir_b / rel);
            std::stringstream sa, sb;
            sa << fa.rdbuf();
            sb << fb.rdbuf();
            CHECK(sa.str() == sb.str());
        }
    }
    SECTION("duplicate manifest paths are rejected") {
        std::filesystem::create_directories(dir);
        const auto p = dir / "dup.tsv";
        std::ofstream(p) << "clouds/a.xyz\t0\nclouds/a.xyz\t1\n";
        CHECK_THROWS_AS(read_manifest(p.string()), DataError);
    }
}
