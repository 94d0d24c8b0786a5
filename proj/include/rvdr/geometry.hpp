#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace rvdr {

struct CameraIntrinsics {
    double fx = 0, fy = 0;  // focal lengths, pixels
    double cx = 0, cy = 0;  // principal point, pixels
    int width = 0, height = 0;

    void validate() const;  // throws std::invalid_argument on bad values
};

// Camera ray through a pixel center; origin is the camera origin (0,0,0).
struct Ray {
    int u = 0, v = 0;
    Eigen::Vector3d dir{0, 0, 1};  // unit, dir.z() > 0
};

// Depth image in meters, z-depth convention, 0 = missing/invalid.
struct DepthImage {
    int height = 0, width = 0;
    std::vector<double> values;

    DepthImage() = default;
    DepthImage(int h, int w, double fill = 0.0) : height(h), width(w), values(size_t(h) * w, fill) {}

    double& at(int v, int u) { return values[size_t(v) * width + u]; }
    double at(int v, int u) const { return values[size_t(v) * width + u]; }
    size_t size() const { return values.size(); }
};

struct Mask {
    int height = 0, width = 0;
    std::vector<uint8_t> values;

    Mask() = default;
    Mask(int h, int w, uint8_t fill = 0) : height(h), width(w), values(size_t(h) * w, fill) {}

    uint8_t& at(int v, int u) { return values[size_t(v) * width + u]; }
    bool at(int v, int u) const { return values[size_t(v) * width + u] != 0; }
    size_t count() const;
};

// Back-projected points with pixel provenance (same index in both arrays).
struct PointCloud {
    std::vector<Eigen::Vector3d> points;
    std::vector<int> pixel_u;
    std::vector<int> pixel_v;

    size_t size() const { return points.size(); }
};

// Axis-aligned voxel partition of the point cloud's padded bounding box.
// Cells bin points with half-open intervals [lo, hi); the top boundary of the
// last cell is clamped inward so every point has exactly one cell.
struct VoxelGrid {
    Eigen::Vector3d origin{0, 0, 0};
    Eigen::Vector3d cell_size{0, 0, 0};
    Eigen::Vector3i resolution{0, 0, 0};
    std::vector<uint8_t> occupancy;           // res.x*res.y*res.z
    std::vector<std::vector<int>> cells;      // point indices per cell

    int num_cells() const { return resolution.x() * resolution.y() * resolution.z(); }
    int cell_index(int ix, int iy, int iz) const {
        return (iz * resolution.y() + iy) * resolution.x() + ix;
    }
    Eigen::Vector3i cell_coord(int index) const;
    Eigen::Vector3d cell_min(const Eigen::Vector3i& c) const;
    Eigen::Vector3d cell_center(int index) const;
    Eigen::Vector3d box_min() const { return origin; }
    Eigen::Vector3d box_max() const {
        return origin + cell_size.cwiseProduct(resolution.cast<double>());
    }
    bool occupied(int index) const { return occupancy[index] != 0; }

    // Half-open binning with top clamp; coordinates clamped into the grid.
    Eigen::Vector3i locate(const Eigen::Vector3d& p) const;
};

// One ray paired with one occupied voxel it crosses; distances along the ray.
struct RayVoxelPair {
    int ray_id = 0;
    int voxel_id = 0;
    double t_in = 0;
    double t_out = 0;

    double span() const { return t_out - t_in; }
};

// A traversed pair scored by the decoder: termination logit and offset into
// the voxel (meters along the ray, within [0, span]).
struct ScoredPair {
    RayVoxelPair pair;
    double logit = 0;
    double delta = 0;
};

Ray pixel_ray(const CameraIntrinsics& k, int u, int v);

PointCloud backproject(const DepthImage& d, const CameraIntrinsics& k);

VoxelGrid build_voxel_grid(const std::vector<Eigen::Vector3d>& points,
                           int resolution = 8, double margin = 0.05);

// Ordered occupied-cell crossings of the ray (origin at the camera origin).
// Entry cell selection is nudged by 1e-9 * cell_size along the ray so
// boundary ties resolve to the half-open convention.
std::vector<RayVoxelPair> traverse(const VoxelGrid& g, const Ray& r, int ray_id = 0);

// Per ray: argmax-logit pair wins (ties -> smallest t_in); reported depth is
// the z-coordinate of origin + (t_in + delta) * dir. Rays with no pairs keep 0.
DepthImage compose_depth(const std::vector<std::vector<ScoredPair>>& pairs_per_ray,
                         const std::vector<Ray>& rays, int height, int width);

}  // namespace rvdr
