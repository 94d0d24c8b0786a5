#include "rvdr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rvdr/errors.hpp"

namespace rvdr {

void CameraIntrinsics::validate() const {
    if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("intrinsics: focal lengths must be positive");
    if (!(cx > 0 && cx < width) || !(cy > 0 && cy < height))
        throw std::invalid_argument("intrinsics: principal point outside image");
    if (width <= 0 || height <= 0) throw std::invalid_argument("intrinsics: non-positive image size");
}

size_t Mask::count() const {
    size_t n = 0;
    for (uint8_t m : values) n += (m != 0);
    return n;
}

Ray pixel_ray(const CameraIntrinsics& k, int u, int v) {
    if (u < 0 || u >= k.width || v < 0 || v >= k.height)
        throw std::invalid_argument("pixel_ray: pixel out of bounds");
    Eigen::Vector3d d((u + 0.5 - k.cx) / k.fx, (v + 0.5 - k.cy) / k.fy, 1.0);
    Ray r;
    r.u = u;
    r.v = v;
    r.dir = d.normalized();
    return r;
}

PointCloud backproject(const DepthImage& d, const CameraIntrinsics& k) {
    if (d.height != k.height || d.width != k.width)
        throw std::invalid_argument("backproject: depth/intrinsics shape mismatch");
    PointCloud out;
    for (int v = 0; v < d.height; ++v) {
        for (int u = 0; u < d.width; ++u) {
            const double z = d.at(v, u);
            if (!(z > 0)) continue;
            const Ray r = pixel_ray(k, u, v);
            out.points.push_back(r.dir / r.dir.z() * z);  // depth = z convention
            out.pixel_u.push_back(u);
            out.pixel_v.push_back(v);
        }
    }
    return out;
}

Eigen::Vector3i VoxelGrid::cell_coord(int index) const {
    const int nx = resolution.x(), ny = resolution.y();
    return {index % nx, (index / nx) % ny, index / (nx * ny)};
}

Eigen::Vector3d VoxelGrid::cell_min(const Eigen::Vector3i& c) const {
    return origin + cell_size.cwiseProduct(c.cast<double>());
}

Eigen::Vector3d VoxelGrid::cell_center(int index) const {
    return cell_min(cell_coord(index)) + 0.5 * cell_size;
}

Eigen::Vector3i VoxelGrid::locate(const Eigen::Vector3d& p) const {
    Eigen::Vector3i c;
    for (int a = 0; a < 3; ++a) {
        int i = static_cast<int>(std::floor((p[a] - origin[a]) / cell_size[a]));
        c[a] = std::clamp(i, 0, resolution[a] - 1);
    }
    return c;
}

VoxelGrid build_voxel_grid(const std::vector<Eigen::Vector3d>& points, int resolution, double margin) {
    if (points.empty()) throw DataError("no valid geometry");
    if (resolution < 1) throw std::invalid_argument("build_voxel_grid: resolution must be >= 1");

    Eigen::Vector3d lo = points[0], hi = points[0];
    for (const auto& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    // Pad by the margin fraction per side; the extra 1e-6 keeps the box
    // non-degenerate for flat or single-point inputs.
    const Eigen::Vector3d pad = margin * (hi - lo) + Eigen::Vector3d::Constant(1e-6);
    VoxelGrid g;
    g.origin = lo - pad;
    g.resolution = Eigen::Vector3i::Constant(resolution);
    g.cell_size = (hi + pad - g.origin) / double(resolution);
    g.occupancy.assign(size_t(g.num_cells()), 0);
    g.cells.assign(size_t(g.num_cells()), {});

    for (size_t i = 0; i < points.size(); ++i) {
        const Eigen::Vector3i c = g.locate(points[i]);
        const int idx = g.cell_index(c.x(), c.y(), c.z());
        g.cells[idx].push_back(static_cast<int>(i));
        g.occupancy[idx] = 1;
    }
    return g;
}

std::vector<RayVoxelPair> traverse(const VoxelGrid& g, const Ray& r, int ray_id) {
    std::vector<RayVoxelPair> out;
    const Eigen::Vector3d& d = r.dir;
    const Eigen::Vector3d lo = g.box_min(), hi = g.box_max();

    // Slab test against the grid box.
    double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
            if (0.0 < lo[a] || 0.0 > hi[a]) return out;  // origin coordinate is 0
            continue;
        }
        double ta = lo[a] / d[a], tb = hi[a] / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (!(t0 < t1)) return out;

    const double eps_t = 1e-9 * g.cell_size.minCoeff();
    Eigen::Vector3i c = g.locate((t0 + eps_t) * d);

    Eigen::Vector3i step;
    Eigen::Vector3d t_max, t_delta;
    for (int a = 0; a < 3; ++a) {
        if (d[a] > 0) {
            step[a] = 1;
            t_delta[a] = g.cell_size[a] / d[a];
            t_max[a] = (lo[a] + (c[a] + 1) * g.cell_size[a]) / d[a];
        } else if (d[a] < 0) {
            step[a] = -1;
            t_delta[a] = -g.cell_size[a] / d[a];
            t_max[a] = (lo[a] + c[a] * g.cell_size[a]) / d[a];
        } else {
            step[a] = 0;
            t_delta[a] = std::numeric_limits<double>::infinity();
            t_max[a] = std::numeric_limits<double>::infinity();
        }
    }

    double t_curr = t0;
    while (t_curr < t1) {
        int axis = 0;
        if (t_max[1] < t_max[axis]) axis = 1;
        if (t_max[2] < t_max[axis]) axis = 2;
        const double t_next = std::min(t_max[axis], t1);

        const int idx = g.cell_index(c.x(), c.y(), c.z());
        if (g.occupied(idx) && t_next > t_curr) {
            out.push_back({ray_id, idx, t_curr, t_next});
        }

        if (t_max[axis] >= t1) break;
        t_curr = t_max[axis];
        t_max[axis] += t_delta[axis];
        c[axis] += step[axis];
        if (c[axis] < 0 || c[axis] >= g.resolution[axis]) break;
    }
    return out;
}

DepthImage compose_depth(const std::vector<std::vector<ScoredPair>>& pairs_per_ray,
                         const std::vector<Ray>& rays, int height, int width) {
    if (pairs_per_ray.size() != rays.size())
        throw std::invalid_argument("compose_depth: rays/pairs size mismatch");
    DepthImage out(height, width);
    for (size_t i = 0; i < rays.size(); ++i) {
        const auto& scored = pairs_per_ray[i];
        if (scored.empty()) continue;
        const ScoredPair* best = nullptr;
        for (const auto& sp : scored) {
            if (sp.delta < 0 || sp.delta > sp.pair.span())
                throw std::invalid_argument("compose_depth: offset outside voxel span");
            if (!best || sp.logit > best->logit ||
                (sp.logit == best->logit && sp.pair.t_in < best->pair.t_in)) {
                best = &sp;
            }
        }
        out.at(rays[i].v, rays[i].u) = (best->pair.t_in + best->delta) * rays[i].dir.z();
    }
    return out;
}

}  // namespace rvdr
