#include "rvdr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <thread>

#include "rvdr/errors.hpp"

namespace rvdr {

void MetricAccumulator::add(const DepthImage& pred, const DepthImage& gt, const Mask& mask) {
    if (pred.height != gt.height || pred.width != gt.width || mask.height != gt.height ||
        mask.width != gt.width)
        throw std::invalid_argument("evaluate: shape mismatch");
    for (int v = 0; v < gt.height; ++v) {
        for (int u = 0; u < gt.width; ++u) {
            if (!mask.at(v, u)) continue;
            const double t = gt.at(v, u);
            if (!(t > 0)) throw DataError("evaluate: non-positive ground truth on mask");
            const double p = pred.at(v, u);
            const double err = p - t;
            se += err * err;
            ae += std::abs(err);
            rel += std::abs(err) / t;
            ++n;
            if (p > 0) {
                const double ratio = std::max(p / t, t / p);
                if (ratio < 1.05) ++d105;
                if (ratio < 1.10) ++d110;
                if (ratio < 1.25) ++d125;
            }
        }
    }
}

MetricReport MetricAccumulator::report() const {
    if (n == 0) throw DataError("evaluate: empty mask");
    MetricReport r;
    r.pixels = n;
    r.rmse = std::sqrt(se / double(n));
    r.mae = ae / double(n);
    r.rel = rel / double(n);
    r.delta_105 = 100.0 * double(d105) / double(n);
    r.delta_110 = 100.0 * double(d110) / double(n);
    r.delta_125 = 100.0 * double(d125) / double(n);
    return r;
}

MetricReport evaluate(const DepthImage& pred, const DepthImage& gt, const Mask& mask) {
    MetricAccumulator acc;
    acc.add(pred, gt, mask);
    return acc.report();
}

DatasetEvaluation evaluate_dataset(Model& model, const std::vector<const SceneRecord*>& scenes,
                                   const std::vector<std::string>& ids, int threads) {
    if (scenes.empty()) throw DataError("evaluate_dataset: empty split");
    DatasetEvaluation out;
    out.per_scene.resize(scenes.size());

    std::vector<DepthImage> restored(scenes.size());
    const int nthreads = std::max(1, std::min<int>(threads, int(scenes.size())));
    auto worker = [&](int tid) {
        for (size_t i = size_t(tid); i < scenes.size(); i += size_t(nthreads))
            restored[i] = restore(model, *scenes[i], scenes[i]->object_mask);
    };
    if (nthreads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker, t);
        for (auto& t : pool) t.join();
    }

    MetricAccumulator acc_restored, acc_corrupted;
    for (size_t i = 0; i < scenes.size(); ++i) {
        const SceneRecord& s = *scenes[i];
        acc_restored.add(restored[i], s.depth_gt, s.object_mask);
        acc_corrupted.add(s.depth_raw, s.depth_gt, s.object_mask);
        out.per_scene[i].id = i < ids.size() ? ids[i] : std::to_string(i);
        out.per_scene[i].restored = evaluate(restored[i], s.depth_gt, s.object_mask);
        out.per_scene[i].corrupted = evaluate(s.depth_raw, s.depth_gt, s.object_mask);
    }
    out.restored = acc_restored.report();
    out.corrupted = acc_corrupted.report();
    return out;
}

std::string metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-24s %8s %8s %8s %8s %8s %8s %10s\n", "Method", "RMSE",
                  "REL", "MAE", "d1.05", "d1.10", "d1.25", "pixels");
    out += buf;
    for (const auto& [name, r] : rows) {
        std::snprintf(buf, sizeof(buf), "%-24s %8.4f %8.4f %8.4f %8.2f %8.2f %8.2f %10ld\n",
                      name.c_str(), r.rmse, r.rel, r.mae, r.delta_105, r.delta_110, r.delta_125,
                      r.pixels);
        out += buf;
    }
    return out;
}

}  // namespace rvdr
