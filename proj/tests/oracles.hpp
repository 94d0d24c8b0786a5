// Test-only reference implementations, kept independent of the library's
// algorithmic paths: brute-force binning, fine-step ray sampling, nested-loop
// metric sums, and central-difference gradients.
#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "rvdr/datagen.hpp"
#include "rvdr/geometry.hpp"
#include "rvdr/network.hpp"
#include "rvdr/random.hpp"

namespace rvdr::oracles {

// Voxel visit order by marching the ray at step = min(cell)/1000 and
// recording occupied-cell changes. Matches traverse() away from boundary
// ties.
std::vector<int> traversal_by_sampling(const VoxelGrid& g, const Ray& r);

// Per-cell point counts by an independent nested-loop binning.
std::vector<long> recount_points(const std::vector<Eigen::Vector3d>& points,
                                 const Eigen::Vector3d& origin, const Eigen::Vector3d& cell_size,
                                 const Eigen::Vector3i& resolution);

// Nested-loop metric sums (no shared code with metrics.cpp).
struct MetricOracle {
    double rmse, rel, mae, d105, d110, d125;
};
MetricOracle metrics_by_loops(const DepthImage& pred, const DepthImage& gt, const Mask& mask);

// Central differences over selected parameter entries of a scalar function.
// Returns the worst relative error across probes.
struct GradProbe {
    std::string block;
    Eigen::Index index;
    double analytic, numeric;
};
double max_rel_error(const std::vector<GradProbe>& probes);

std::vector<GradProbe> gradient_check(Model& model, const std::function<double()>& loss,
                                      const std::function<void()>& compute_grads,
                                      int probes_per_block, uint64_t seed, double h = 1e-6);

// First-inside-point ray march against membership predicates written here,
// not against the renderer's analytic intersections.
double ray_march_depth(const SceneSpec& spec, const Ray& ray, double step, double t_max);

// Uniform random rotation matrix.
Eigen::Matrix3d random_rotation(Rng& rng);

}  // namespace rvdr::oracles
