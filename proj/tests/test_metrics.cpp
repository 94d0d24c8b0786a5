#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rvdr/datagen.hpp"
#include "rvdr/errors.hpp"
#include "rvdr/metrics.hpp"

using namespace rvdr;

namespace {

struct Case {
    DepthImage pred, gt;
    Mask mask;
};

Case random_case(int size, uint64_t seed) {
    Case c{DepthImage(size, size), DepthImage(size, size), Mask(size, size)};
    Rng rng(seed);
    for (int i = 0; i < size * size; ++i) {
        c.gt.values[size_t(i)] = rng.uniform(0.3, 2.5);
        c.pred.values[size_t(i)] = rng.uniform() < 0.1 ? 0.0 : rng.uniform(0.3, 2.5);
        c.mask.values[size_t(i)] = rng.uniform() < 0.6 ? 1 : 0;
    }
    return c;
}

}  // namespace

TEST_CASE("evaluate fixed cases") {
    const int size = 8;
    DepthImage gt(size, size, 1.5);
    Mask mask(size, size, 1);

    SUBCASE("perfect prediction") {
        const MetricReport r = evaluate(gt, gt, mask);
        CHECK(r.rmse == 0.0);
        CHECK(r.rel == 0.0);
        CHECK(r.mae == 0.0);
        CHECK(r.delta_105 == 100.0);
        CHECK(r.delta_110 == 100.0);
        CHECK(r.delta_125 == 100.0);
        CHECK(r.pixels == size * size);
    }
    SUBCASE("uniform 8 percent overestimate") {
        DepthImage pred = gt;
        for (auto& v : pred.values) v *= 1.08;
        const MetricReport r = evaluate(pred, gt, mask);
        CHECK(r.delta_105 == 0.0);
        CHECK(r.delta_110 == 100.0);
        CHECK(r.delta_125 == 100.0);
        CHECK(r.rel == doctest::Approx(0.08));
    }
    SUBCASE("uniform +1 cm error") {
        DepthImage pred = gt;
        for (auto& v : pred.values) v += 0.01;
        const MetricReport r = evaluate(pred, gt, mask);
        CHECK(r.rmse == doctest::Approx(0.01));
        CHECK(r.mae == doctest::Approx(0.01));
    }
    SUBCASE("unrestored zeros fail the thresholds and enter the means") {
        DepthImage pred = gt;
        pred.values[0] = 0.0;  // pixel (0,0)
        const MetricReport r = evaluate(pred, gt, mask);
        CHECK(r.delta_105 == doctest::Approx(100.0 * 63.0 / 64.0));
        CHECK(r.mae == doctest::Approx(1.5 / 64.0));
    }
    SUBCASE("empty mask and bad ground truth raise") {
        CHECK_THROWS_AS(evaluate(gt, gt, Mask(size, size)), DataError);
        DepthImage bad = gt;
        bad.values[3] = 0.0;
        CHECK_THROWS_AS(evaluate(gt, bad, mask), DataError);
    }
}

TEST_CASE("evaluate matches the nested-loop oracle to 1e-12") {
    for (uint64_t seed : {5ull, 6ull, 7ull}) {
        const Case c = random_case(50, seed);
        const MetricReport r = evaluate(c.pred, c.gt, c.mask);
        const oracles::MetricOracle o = oracles::metrics_by_loops(c.pred, c.gt, c.mask);
        CHECK(std::fabs(r.rmse - o.rmse) <= 1e-12);
        CHECK(std::fabs(r.rel - o.rel) <= 1e-12);
        CHECK(std::fabs(r.mae - o.mae) <= 1e-12);
        CHECK(std::fabs(r.delta_105 - o.d105) <= 1e-12);
        CHECK(std::fabs(r.delta_110 - o.d110) <= 1e-12);
        CHECK(std::fabs(r.delta_125 - o.d125) <= 1e-12);
    }
}

TEST_CASE("metric invariants") {
    const Case c = random_case(40, 11);
    const MetricReport r = evaluate(c.pred, c.gt, c.mask);

    SUBCASE("ordering and monotonicity") {
        CHECK(r.rmse >= r.mae);
        CHECK(r.mae >= 0.0);
        CHECK(r.delta_105 <= r.delta_110);
        CHECK(r.delta_110 <= r.delta_125);
    }
    SUBCASE("scaling both images leaves REL and deltas unchanged") {
        Case s = c;
        for (auto& v : s.pred.values) v *= 2.5;
        for (auto& v : s.gt.values) v *= 2.5;
        const MetricReport r2 = evaluate(s.pred, s.gt, s.mask);
        CHECK(r2.rel == doctest::Approx(r.rel).epsilon(1e-12));
        CHECK(r2.delta_105 == r.delta_105);
        CHECK(r2.delta_110 == r.delta_110);
        CHECK(r2.delta_125 == r.delta_125);
        CHECK(r2.rmse == doctest::Approx(2.5 * r.rmse).epsilon(1e-12));
        CHECK(r2.mae == doctest::Approx(2.5 * r.mae).epsilon(1e-12));
    }
    SUBCASE("pixel permutation invariance") {
        // Apply one permutation to all three images jointly.
        Case p = c;
        Rng rng(13);
        const int n = 40 * 40;
        for (int i = n; i > 1; --i) {
            const int j = int(rng.index(uint64_t(i)));
            std::swap(p.pred.values[size_t(i - 1)], p.pred.values[size_t(j)]);
            std::swap(p.gt.values[size_t(i - 1)], p.gt.values[size_t(j)]);
            std::swap(p.mask.values[size_t(i - 1)], p.mask.values[size_t(j)]);
        }
        const MetricReport r2 = evaluate(p.pred, p.gt, p.mask);
        CHECK(r2.rmse == doctest::Approx(r.rmse).epsilon(1e-14));
        CHECK(r2.delta_105 == r.delta_105);
        CHECK(r2.pixels == r.pixels);
    }
}

TEST_CASE("evaluate_dataset aggregation") {
    DatasetParams params;
    params.width = params.height = 32;
    static const SceneRecord scene = make_scene(sample_scene_spec(params, derive_seed(77, 1)));
    Model model = Model::init({}, 19);

    SUBCASE("single-scene split equals evaluate on that scene") {
        const DatasetEvaluation ev = evaluate_dataset(model, {&scene}, {"000000"});
        const DepthImage restored = restore(model, scene, scene.object_mask);
        const MetricReport want = evaluate(restored, scene.depth_gt, scene.object_mask);
        CHECK(ev.restored.rmse == doctest::Approx(want.rmse).epsilon(1e-14));
        CHECK(ev.per_scene.size() == 1);
        CHECK(ev.corrupted.rmse ==
              doctest::Approx(evaluate(scene.depth_raw, scene.depth_gt, scene.object_mask).rmse));
    }
    SUBCASE("duplicating a scene leaves the aggregate unchanged") {
        const DatasetEvaluation once = evaluate_dataset(model, {&scene}, {"a"});
        const DatasetEvaluation twice = evaluate_dataset(model, {&scene, &scene}, {"a", "b"});
        CHECK(twice.restored.rmse == doctest::Approx(once.restored.rmse).epsilon(1e-14));
        CHECK(twice.restored.delta_105 == doctest::Approx(once.restored.delta_105));
        CHECK(twice.restored.pixels == 2 * once.restored.pixels);
    }
    SUBCASE("empty split raises") {
        CHECK_THROWS_AS(evaluate_dataset(model, {}, {}), DataError);
    }
}
