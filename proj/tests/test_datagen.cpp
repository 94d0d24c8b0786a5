#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "rvdr/datagen.hpp"
#include "rvdr/errors.hpp"
#include "rvdr/io.hpp"
#include "rvdr/training.hpp"

using namespace rvdr;
namespace fs = std::filesystem;

namespace {

SceneSpec bare_sphere_spec() {
    SceneSpec spec;
    spec.intrinsics = default_intrinsics(64, 64);
    spec.object.kind = ObjectKind::kSphere;
    spec.object.radius = 0.1;
    spec.object_pose.t = {0, 0, 1.0};
    spec.with_hand = false;
    spec.background.plane_depth = 2.0;
    spec.seed = 5;
    return spec;
}

std::vector<uint8_t> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("render_perfect analytic sphere") {
    const SceneSpec spec = bare_sphere_spec();
    const RenderResult r = render_perfect(spec);

    // The optical-axis pixel (center at cx == 32.0 means pixel 31 center is
    // 31.5; use the ray through the true center via an odd-ish probe).
    int best_u = 0, best_v = 0;
    double best = 1e9;
    for (int v = 0; v < 64; ++v)
        for (int u = 0; u < 64; ++u) {
            const Ray ray = pixel_ray(spec.intrinsics, u, v);
            const double off = ray.dir.head<2>().norm();
            if (off < best) {
                best = off;
                best_u = u;
                best_v = v;
            }
        }
    const double d = r.depth.at(best_v, best_u);
    // Near-axis pixel: depth approaches 0.9 quadratically in the offset.
    CHECK(std::fabs(d - 0.9) < 1e-3);
    CHECK(r.hand_mask.count() == 0);
    CHECK(r.object_mask.count() > 0);
    CHECK(r.depth_no_object.at(best_v, best_u) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("render_perfect matches the ray-march oracle") {
    DatasetParams params;
    params.width = params.height = 64;
    Rng rng(71);
    int checked = 0;
    for (int s = 0; s < 100; ++s) {
        const SceneSpec spec = sample_scene_spec(params, derive_seed(1234, uint64_t(s)));
        const RenderResult r = render_perfect(spec);
        for (int probe = 0; probe < 12; ++probe) {
            const int u = int(rng.index(64)), v = int(rng.index(64));
            const Ray ray = pixel_ray(spec.intrinsics, u, v);
            const double d = r.depth.at(v, u);
            REQUIRE(d > 0);
            const double t_hit = d / ray.dir.z();
            const double march = oracles::ray_march_depth(spec, ray, 1e-4, t_hit + 0.002);
            if (march == 0.0) continue;  // oracle ran past its budget
            CHECK(std::fabs(march - d) < 5e-4);
            ++checked;
        }
    }
    CHECK(checked > 1000);
}

TEST_CASE("degenerate spec is rejected") {
    SceneSpec spec = bare_sphere_spec();
    spec.object_pose.t = {5.0, 0, 1.0};  // far outside the frustum
    CHECK_THROWS_AS(render_perfect(spec), DataError);
}

TEST_CASE("corrupt_depth") {
    const int size = 100;
    DepthImage perfect(size, size, 1.0);
    DepthImage background(size, size, 2.0);
    Mask mask(size, size, 1);

    SUBCASE("zero probabilities are a bit-exact passthrough") {
        CorruptionParams p{0, 0, 0, 0.01};
        const DepthImage out = corrupt_depth(perfect, background, mask, p, 9);
        for (size_t i = 0; i < out.size(); ++i) CHECK(out.values[i] == perfect.values[i]);
    }
    SUBCASE("p_missing = 1 zeroes every mask pixel") {
        CorruptionParams p{1.0, 0, 0, 0.01};
        const DepthImage out = corrupt_depth(perfect, background, mask, p, 9);
        for (double v : out.values) CHECK(v == 0.0);
    }
    SUBCASE("missing count stays within the 3-sigma binomial bound") {
        CorruptionParams p{0.4, 0.0, 0.0, 0.01};
        const DepthImage out = corrupt_depth(perfect, background, mask, p, 9);
        long zeros = 0;
        for (double v : out.values) zeros += (v == 0.0);
        const double n = double(size) * size;
        const double sigma = std::sqrt(n * 0.4 * 0.6);
        CHECK(std::fabs(double(zeros) - 0.4 * n) <= 3 * sigma);
    }
    SUBCASE("background mode copies the no-object depth") {
        CorruptionParams p{0.0, 1.0, 0.0, 0.01};
        const DepthImage out = corrupt_depth(perfect, background, mask, p, 9);
        for (double v : out.values) CHECK(v == 2.0);
    }
    SUBCASE("off-mask pixels are untouched under any seed") {
        Mask half(size, size, 0);
        for (int v = 0; v < size; ++v)
            for (int u = 0; u < size / 2; ++u) half.values[size_t(v) * size + u] = 1;
        CorruptionParams p{0.5, 0.3, 0.2, 0.02};
        const DepthImage out = corrupt_depth(perfect, background, half, p, 77);
        for (int v = 0; v < size; ++v)
            for (int u = size / 2; u < size; ++u) CHECK(out.at(v, u) == perfect.at(v, u));
    }
    SUBCASE("invalid probabilities are rejected") {
        CorruptionParams p{0.7, 0.5, 0.0, 0.01};
        CHECK_THROWS_AS(corrupt_depth(perfect, background, mask, p, 9), ConfigError);
    }
}

TEST_CASE("synth_hand contact geometry") {
    ObjectShape cyl;
    cyl.kind = ObjectKind::kCylinder;
    cyl.radius = 0.03;
    cyl.half_height = 0.09;
    Pose pose;
    pose.R = (Eigen::AngleAxisd(0.4, Eigen::Vector3d::UnitX()) *
              Eigen::AngleAxisd(-0.7, Eigen::Vector3d::UnitY()))
                 .toRotationMatrix();
    pose.t = {0.05, -0.02, 0.8};
    GripParams grip;
    grip.angle = 1.1;

    SUBCASE("all five fingertips lie on the cylinder surface") {
        const HandKeypoints kp = synth_hand(cyl, pose, grip);
        const Eigen::Vector3d axis = pose.R.col(2);
        for (int f = 0; f < 5; ++f) {
            const Eigen::Vector3d tip = kp.points.row(1 + 4 * f + 3);
            const Eigen::Vector3d rel = tip - pose.t;
            const double dist_to_axis = (rel - rel.dot(axis) * axis).norm();
            CHECK(std::fabs(dist_to_axis - cyl.radius) < 1e-9);
        }
    }
    SUBCASE("same parameters give identical keypoints") {
        const HandKeypoints a = synth_hand(cyl, pose, grip);
        const HandKeypoints b = synth_hand(cyl, pose, grip);
        CHECK((a.points - b.points).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("grip angle +pi rotates wrist-relative fingertips about the axis by pi") {
        const HandKeypoints a = synth_hand(cyl, pose, grip);
        GripParams flipped = grip;
        flipped.angle = grip.angle + M_PI;
        const HandKeypoints b = synth_hand(cyl, pose, flipped);
        const Eigen::Matrix3d r_pi =
            pose.R * Eigen::AngleAxisd(M_PI, Eigen::Vector3d::UnitZ()).toRotationMatrix() *
            pose.R.transpose();
        for (int f = 0; f < 5; ++f) {
            const Eigen::Vector3d tip_a = a.points.row(1 + 4 * f + 3).transpose() -
                                          a.points.row(0).transpose();
            const Eigen::Vector3d tip_b = b.points.row(1 + 4 * f + 3).transpose() -
                                          b.points.row(0).transpose();
            CHECK((tip_b - r_pi * tip_a).norm() < 1e-9);
        }
    }
    SUBCASE("ungraspable dimensions are rejected") {
        ObjectShape fat;
        fat.kind = ObjectKind::kSphere;
        fat.radius = 0.09;
        CHECK_THROWS_AS(synth_hand(fat, pose, grip), std::invalid_argument);
    }
    SUBCASE("glass grips land on the stem") {
        ObjectShape glass;
        glass.kind = ObjectKind::kStemGlass;
        glass.radius = 0.035;
        glass.radius2 = 0.01;
        glass.half_height = 0.09;
        const HandKeypoints kp = synth_hand(glass, pose, grip);
        const Eigen::Vector3d axis = pose.R.col(2);
        for (int f = 0; f < 5; ++f) {
            const Eigen::Vector3d tip = kp.points.row(1 + 4 * f + 3);
            const Eigen::Vector3d rel = tip - pose.t;
            const double dist_to_axis = (rel - rel.dot(axis) * axis).norm();
            CHECK(std::fabs(dist_to_axis - glass.radius2) < 1e-9);
        }
    }
}

TEST_CASE("make_scene invariants") {
    DatasetParams params;
    params.width = params.height = 64;
    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        const SceneRecord s = make_scene(sample_scene_spec(params, derive_seed(55, seed)));
        // Corruption locality: off-mask pixels agree bit-exactly.
        for (int v = 0; v < 64; ++v)
            for (int u = 0; u < 64; ++u) {
                if (!s.object_mask.at(v, u))
                    CHECK(s.depth_raw.at(v, u) == s.depth_gt.at(v, u));
                CHECK(!(s.object_mask.at(v, u) && s.hand_mask.at(v, u)));
            }
        CHECK(backproject(s.depth_raw, s.intrinsics).size() > 0);
        CHECK(s.hand_mask.count() > 0);
    }
}

TEST_CASE("generate_dataset layout and determinism") {
    DatasetParams params;
    params.n_scenes = 5;
    params.width = params.height = 32;
    params.seed = 99;
    const std::string dir_a = "/tmp/rvdr_test_ds_a";
    const std::string dir_b = "/tmp/rvdr_test_ds_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);

    const auto rows = generate_dataset(params, dir_a, "cafef00dcafef00d", 2);
    REQUIRE(rows.size() == 5);

    SUBCASE("manifest carries every scene field") {
        const json manifest = load_json(dir_a + "/manifest.json");
        CHECK(manifest.at("config_hash") == "cafef00dcafef00d");
        CHECK(manifest.at("scenes").size() == 5);
        for (const json& row : manifest.at("scenes")) {
            CHECK(row.contains("id"));
            CHECK(row.contains("kind"));
            CHECK(row.contains("seed"));
            CHECK(row.contains("split"));
            CHECK(row.contains("unknown_category"));
            CHECK(row.contains("supervised_fraction"));
        }
        for (const char* f : {"rgb.ppm", "depth_raw.rvt", "depth_gt.rvt", "mask_obj.rvt",
                              "mask_hand.rvt", "keypoints.json"})
            CHECK(fs::exists(dir_a + "/scenes/000000/" + f));
    }
    SUBCASE("same master seed gives byte-identical files") {
        generate_dataset(params, dir_b, "cafef00dcafef00d", 1);  // different thread count too
        for (const auto& entry : fs::recursive_directory_iterator(dir_a)) {
            if (!entry.is_regular_file()) continue;
            const std::string rel = fs::relative(entry.path(), dir_a).string();
            CHECK(slurp(entry.path().string()) == slurp(dir_b + "/" + rel));
        }
    }
    SUBCASE("dataset loads back and validates") {
        const Dataset ds = load_dataset(dir_a);
        REQUIRE(ds.scenes.size() == 5);
        for (const auto& s : ds.scenes) s.validate();
        CHECK(ds.split[0] == 0);
        CHECK(ds.split[4] == 2);  // 7:2:1 on 5 scenes -> 3/1/1
    }
}

TEST_CASE("kind histogram follows the distribution") {
    DatasetParams params;
    Rng rng(123);
    std::map<ObjectKind, int> counts;
    const int n = 5000;
    for (int i = 0; i < n; ++i) counts[sample_kind(params.kind_distribution, rng)]++;
    for (const auto& [kind, p] : params.kind_distribution) {
        const double sigma = std::sqrt(n * p * (1 - p));
        CHECK(std::fabs(counts[kind] - n * p) <= 3 * sigma);
    }
}
