#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>

#include "oracles.hpp"
#include "rvdr/features.hpp"

using namespace rvdr;

namespace {

FeatureMap constant_rgb(int h, int w, const Eigen::Vector3d& c) {
    FeatureMap f(3, h, w);
    for (int p = 0; p < h * w; ++p) f.m.col(p) = c;
    return f;
}

HandKeypoints sample_hand(Rng& rng) {
    HandKeypoints kp;
    kp.points.row(0) = Eigen::RowVector3d(0.02, -0.01, 0.8);
    for (int i = 1; i < 21; ++i)
        kp.points.row(i) = kp.points.row(0) + Eigen::RowVector3d(rng.uniform(-0.09, 0.09),
                                                                 rng.uniform(-0.09, 0.09),
                                                                 rng.uniform(-0.09, 0.09));
    return kp;
}

}  // namespace

TEST_CASE("positional embedding basics") {
    const Eigen::VectorXd zero = positional_embedding(Eigen::Vector3d::Zero());
    REQUIRE(zero.size() == 30);
    for (int i = 0; i < 30; i += 2) CHECK(zero[i] == 0.0);
    for (int i = 1; i < 30; i += 2) CHECK(zero[i] == 1.0);

    const Eigen::VectorXd e = positional_embedding(Eigen::Vector3d(1, 0, 0));
    CHECK(std::fabs(e[0] - std::sin(M_PI)) < 1e-15);  // first component slot, octave 0
    CHECK(e[1] == doctest::Approx(-1.0));
}

TEST_CASE("hand_abs_feature canonical frame") {
    Rng rng(5);
    HandKeypoints kp = sample_hand(rng);
    const Eigen::VectorXd f = hand_abs_feature(kp);
    REQUIRE(f.size() == 63);
    CHECK(f.segment<3>(0).norm() == 0.0);  // wrist maps to the origin

    const double middle_dist =
        (kp.points.row(HandKeypoints::kMiddleMcp) - kp.points.row(0)).norm();
    CHECK(f.segment<3>(3 * HandKeypoints::kMiddleMcp)
              .isApprox(Eigen::Vector3d(middle_dist, 0, 0), 1e-12));

    SUBCASE("invariant under rigid transforms") {
        for (int trial = 0; trial < 100; ++trial) {
            const Eigen::Matrix3d r = oracles::random_rotation(rng);
            const Eigen::Vector3d t(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
            HandKeypoints moved;
            for (int i = 0; i < 21; ++i)
                moved.points.row(i) = (r * kp.points.row(i).transpose() + t).transpose();
            CHECK((hand_abs_feature(moved) - f).cwiseAbs().maxCoeff() < 1e-9);
        }
    }
    SUBCASE("collinear frame points are rejected") {
        HandKeypoints bad = kp;
        bad.points.row(HandKeypoints::kIndexMcp) =
            bad.points.row(0) +
            2.0 * (bad.points.row(HandKeypoints::kMiddleMcp) - bad.points.row(0));
        CHECK_THROWS_WITH_AS(hand_abs_feature(bad), "degenerate hand frame",
                             std::invalid_argument);
    }
}

TEST_CASE("hand_rel_feature") {
    Rng rng(7);
    HandKeypoints kp = sample_hand(rng);

    SUBCASE("wrist-centered first components vanish") {
        const Eigen::VectorXd f = hand_rel_feature(kp, kp.wrist());
        CHECK(f.segment<3>(0).norm() == 0.0);
    }
    SUBCASE("joint translation cancels") {
        const Eigen::Vector3d t(0.3, -0.2, 0.5);
        HandKeypoints moved = kp;
        for (int i = 0; i < 21; ++i) moved.points.row(i) += t.transpose();
        const Eigen::Vector3d center(0.1, 0.0, 0.9);
        CHECK((hand_rel_feature(moved, center + t) - hand_rel_feature(kp, center))
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
    }
    SUBCASE("zero keypoints against a fixed center") {
        HandKeypoints zeros;
        zeros.points.setZero();
        const Eigen::VectorXd f = hand_rel_feature(zeros, Eigen::Vector3d(1, 2, 3));
        for (int i = 0; i < 21; ++i)
            CHECK(f.segment<3>(3 * i).isApprox(Eigen::Vector3d(-1, -2, -3), 1e-15));
    }
}

TEST_CASE("assemble fixed-order concatenation") {
    PairEmbedding e;
    e.f_ray = Eigen::VectorXd::Zero(128);
    e.f_voxel = Eigen::VectorXd::Zero(64);
    e.f_hand = Eigen::VectorXd::Zero(126);
    e.gamma_ray = Eigen::VectorXd::Zero(30);
    e.gamma_voxel = Eigen::VectorXd::Zero(30);

    SUBCASE("zero inputs give the zero 378-vector") {
        const Eigen::VectorXd out = assemble(e);
        REQUIRE(out.size() == 378);
        CHECK(out.norm() == 0.0);
    }
    SUBCASE("slices recover the originals") {
        Rng rng(11);
        for (auto* v : {&e.f_ray, &e.f_voxel, &e.f_hand, &e.gamma_ray, &e.gamma_voxel})
            for (int i = 0; i < v->size(); ++i) (*v)[i] = rng.uniform(-1, 1);
        const Eigen::VectorXd out = assemble(e);
        CHECK(out.segment(0, 128) == e.f_ray);
        CHECK(out.segment(128, 64) == e.f_voxel);
        CHECK(out.segment(192, 126) == e.f_hand);
        CHECK(out.segment(318, 30) == e.gamma_ray);
        CHECK(out.segment(348, 30) == e.gamma_voxel);
    }
    SUBCASE("length mismatch is an error") {
        e.f_hand = Eigen::VectorXd::Zero(63);
        CHECK_THROWS_AS(assemble(e), std::invalid_argument);
    }
}

TEST_CASE("encode_image shapes and constancy") {
    Rng rng(13);
    ImageEncoder enc;
    enc.init(rng);

    SUBCASE("shape is H x W x 32 at the paper resolution, constant away from the rim") {
        const FeatureMap out = enc.forward(constant_rgb(224, 224, {0.4, 0.5, 0.6}));
        CHECK(out.height == 224);
        CHECK(out.width == 224);
        CHECK(out.channels() == 32);
        // The stride-32 level has a ~63 px receptive field, so only central
        // pixels are guaranteed padding-free; compare a few of those.
        const Eigen::VectorXd a = out.m.col(out.pixel(110, 110));
        const Eigen::VectorXd b = out.m.col(out.pixel(112, 115));
        const Eigen::VectorXd c = out.m.col(out.pixel(118, 106));
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((a - c).cwiseAbs().maxCoeff() < 1e-9);
    }
    SUBCASE("non-divisible shapes are rejected") {
        CHECK_THROWS_AS(enc.forward(constant_rgb(60, 64, {0, 0, 0})), std::invalid_argument);
    }
}

TEST_CASE("encode_image finite-difference gradient") {
    Rng rng(17);
    ImageEncoder enc;
    enc.init(rng);
    const int h = 32, w = 32;
    FeatureMap rgb(3, h, w);
    for (int p = 0; p < h * w; ++p)
        rgb.m.col(p) = Eigen::Vector3d(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1));

    // Scalar probe: weighted sum of the output map.
    Eigen::MatrixXd probe_w(32, h * w);
    for (int i = 0; i < probe_w.size(); ++i) probe_w.data()[i] = rng.uniform(-1, 1);
    auto loss = [&]() { return (enc.forward(rgb).m.cwiseProduct(probe_w)).sum(); };

    ImageEncoder::Cache cache;
    enc.forward(rgb, true, &cache);
    FeatureMap d_out(32, h, w);
    d_out.m = probe_w;
    enc.zero_grad();
    enc.backward(cache, d_out);

    Rng probe_rng(19);
    Conv2d* convs[6] = {&enc.stem1, &enc.stem2, &enc.down2, &enc.down3, &enc.down4, &enc.reduce};
    double worst = 0;
    for (Conv2d* c : convs) {
        for (int k = 0; k < 10; ++k) {
            const Eigen::Index i = Eigen::Index(probe_rng.index(uint64_t(c->W.size())));
            const double saved = c->W.data()[i];
            const double hh = 1e-6 * std::max(1.0, std::fabs(saved));
            c->W.data()[i] = saved + hh;
            const double fp = loss();
            c->W.data()[i] = saved - hh;
            const double fm = loss();
            c->W.data()[i] = saved;
            const double num = (fp - fm) / (2 * hh);
            const double ana = c->dW.data()[i];
            worst = std::max(worst,
                             std::fabs(num - ana) / std::max({std::fabs(num), std::fabs(ana), 1e-8}));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("roi_ray_feature pooling") {
    FeatureMap map(32, 24, 24);

    SUBCASE("constant map pools to the constant, repeated four times") {
        Eigen::VectorXd c(32);
        Rng rng(23);
        for (int i = 0; i < 32; ++i) c[i] = rng.uniform(-2, 2);
        for (int p = 0; p < 24 * 24; ++p) map.m.col(p) = c;
        const Eigen::VectorXd f = roi_ray_feature(map, 11, 9);
        REQUIRE(f.size() == 128);
        for (int cell = 0; cell < 4; ++cell)
            CHECK((f.segment(cell * 32, 32) - c).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("each pooled cell is the mean of its 4x4 sub-window") {
        Rng rng(29);
        for (int i = 0; i < map.m.size(); ++i) map.m.data()[i] = rng.uniform(-1, 1);
        const int u = 12, v = 10;
        const Eigen::VectorXd f = roi_ray_feature(map, u, v);
        for (int cy = 0; cy < 2; ++cy) {
            for (int cx = 0; cx < 2; ++cx) {
                Eigen::VectorXd mean = Eigen::VectorXd::Zero(32);
                for (int dy = 0; dy < 4; ++dy)
                    for (int dx = 0; dx < 4; ++dx) {
                        const int y = std::clamp(v - 3 + 4 * cy + dy, 0, 23);
                        const int x = std::clamp(u - 3 + 4 * cx + dx, 0, 23);
                        mean += map.m.col(y * 24 + x);
                    }
                mean /= 16.0;
                CHECK((f.segment((cy * 2 + cx) * 32, 32) - mean).cwiseAbs().maxCoeff() <= 1e-12);
            }
        }
    }
    SUBCASE("edge pixels clamp and still pool") {
        Rng rng(31);
        for (int i = 0; i < map.m.size(); ++i) map.m.data()[i] = rng.uniform(-1, 1);
        CHECK(roi_ray_feature(map, 0, 0).size() == 128);
        CHECK(roi_ray_feature(map, 23, 23).size() == 128);
    }
}

TEST_CASE("fuse_point_features") {
    Rng rng(37);
    PointFusion fusion;
    fusion.init(rng);

    PointCloud cloud;
    for (int i = 0; i < 40; ++i) {
        cloud.points.push_back({rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2),
                                rng.uniform(0.6, 1.2)});
        cloud.pixel_u.push_back(int(rng.index(16)));
        cloud.pixel_v.push_back(int(rng.index(16)));
    }
    const VoxelGrid grid = build_voxel_grid(cloud.points, 8);
    FeatureMap dense(32, 16, 16);
    for (int i = 0; i < dense.m.size(); ++i) dense.m.data()[i] = rng.uniform(-1, 1);

    SUBCASE("output is N x 32 with the 16+16 split") {
        const Eigen::MatrixXd fused = fusion.forward(cloud, grid, dense);
        CHECK(fused.rows() == 32);
        CHECK(fused.cols() == 40);
    }
    SUBCASE("a point at its voxel center sees only the geometry bias") {
        PointCloud one;
        const Eigen::Vector3i c = grid.locate(cloud.points[0]);
        one.points.push_back(grid.cell_min(c) + 0.5 * grid.cell_size);
        one.pixel_u.push_back(3);
        one.pixel_v.push_back(4);
        const Eigen::MatrixXd fused = fusion.forward(one, grid, dense);
        CHECK((fused.col(0).head(16) - fusion.xyz.b).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("a point outside the grid is rejected") {
        PointCloud bad = cloud;
        bad.points[0] = grid.box_max() + Eigen::Vector3d(1, 0, 0);
        CHECK_THROWS_AS(fusion.forward(bad, grid, dense), std::invalid_argument);
    }
    SUBCASE("gradients of both maps match finite differences") {
        Eigen::MatrixXd probe(32, 40);
        for (int i = 0; i < probe.size(); ++i) probe.data()[i] = rng.uniform(-1, 1);
        auto loss = [&]() {
            return fusion.forward(cloud, grid, dense).cwiseProduct(probe).sum();
        };
        PointFusion::Cache cache;
        fusion.zero_grad();
        fusion.forward(cloud, grid, dense, true, &cache);
        FeatureMap d_dense(32, 16, 16);
        fusion.backward(cache, probe, &d_dense);

        double worst = 0;
        Rng probe_rng(41);
        for (Linear* l : {&fusion.xyz, &fusion.rgb}) {
            for (int k = 0; k < 10; ++k) {
                const Eigen::Index i = Eigen::Index(probe_rng.index(uint64_t(l->W.size())));
                const double saved = l->W.data()[i];
                const double hh = 1e-6;
                l->W.data()[i] = saved + hh;
                const double fp = loss();
                l->W.data()[i] = saved - hh;
                const double fm = loss();
                l->W.data()[i] = saved;
                const double num = (fp - fm) / (2 * hh);
                const double ana = l->dW.data()[i];
                worst = std::max(worst, std::fabs(num - ana) /
                                            std::max({std::fabs(num), std::fabs(ana), 1e-8}));
            }
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("encode_voxel pooling structure") {
    Rng rng(43);
    VoxelEncoder enc;
    enc.init(rng);

    Eigen::MatrixXd fused(32, 12);
    for (int i = 0; i < fused.size(); ++i) fused.data()[i] = rng.uniform(-1, 1);

    SUBCASE("single-point voxel reduces to chained affine maps") {
        const Eigen::VectorXd out = enc.forward(fused, {3});
        const Eigen::VectorXd h = enc.fc1.forward(fused.col(3));
        Eigen::VectorXd g(64);
        g << h, h;
        const Eigen::VectorXd want = enc.fc2.forward(g);
        CHECK((out - want).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("duplication leaves the feature unchanged") {
        const Eigen::VectorXd a = enc.forward(fused, {1, 4, 7});
        const Eigen::VectorXd b = enc.forward(fused, {1, 4, 7, 1, 4, 7, 4});
        CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("permutation invariance is bit-exact over random voxels") {
        Rng trial_rng(47);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<int> cols;
            const int n = 1 + int(trial_rng.index(8));
            for (int i = 0; i < n; ++i) cols.push_back(int(trial_rng.index(12)));
            std::vector<int> shuffled = cols;
            for (size_t i = shuffled.size(); i > 1; --i)
                std::swap(shuffled[i - 1], shuffled[size_t(trial_rng.index(i))]);
            const Eigen::VectorXd a = enc.forward(fused, cols);
            const Eigen::VectorXd b = enc.forward(fused, shuffled);
            REQUIRE(a.size() == b.size());
            CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
        }
    }
    SUBCASE("empty voxel is an error") {
        CHECK_THROWS_AS(enc.forward(fused, {}), std::invalid_argument);
    }
}
