#pragma once

#include <string>
#include <vector>

#include "rvdr/network.hpp"
#include "rvdr/scene.hpp"

namespace rvdr {

// Depth-restoration metrics over a pixel mask. Unrestored predictions
// (value 0) score as failures for the delta thresholds and contribute
// |0 - gt| to the error means.
struct MetricReport {
    double rmse = 0;       // meters
    double rel = 0;        // dimensionless
    double mae = 0;        // meters
    double delta_105 = 0;  // percent
    double delta_110 = 0;
    double delta_125 = 0;
    long pixels = 0;
};

// Exact pixel-weighted aggregation across scenes.
struct MetricAccumulator {
    double se = 0, rel = 0, ae = 0;
    long n = 0, d105 = 0, d110 = 0, d125 = 0;

    void add(const DepthImage& pred, const DepthImage& gt, const Mask& mask);
    MetricReport report() const;
};

MetricReport evaluate(const DepthImage& pred, const DepthImage& gt, const Mask& mask);

struct SceneEvaluation {
    std::string id;
    MetricReport restored;
    MetricReport corrupted;  // input baseline on the same mask
};

struct DatasetEvaluation {
    MetricReport restored;
    MetricReport corrupted;
    std::vector<SceneEvaluation> per_scene;
};

// Restores every scene with the model and reports restored vs corrupted-input
// metrics on the object masks, pixel-weighted across scenes.
DatasetEvaluation evaluate_dataset(Model& model, const std::vector<const SceneRecord*>& scenes,
                                   const std::vector<std::string>& ids, int threads = 1);

// Aligned text table, one row per report.
std::string metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows);

}  // namespace rvdr
