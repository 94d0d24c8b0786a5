#include "oracles.hpp"

#include <cmath>

namespace rvdr::oracles {

std::vector<int> traversal_by_sampling(const VoxelGrid& g, const Ray& r) {
    std::vector<int> out;
    const Eigen::Vector3d lo = g.box_min(), hi = g.box_max();
    // Box entry/exit by slabs.
    double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (r.dir[a] == 0.0) {
            if (0.0 < lo[a] || 0.0 > hi[a]) return out;
            continue;
        }
        double ta = lo[a] / r.dir[a], tb = hi[a] / r.dir[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (!(t0 < t1)) return out;

    const double step = g.cell_size.minCoeff() / 1000.0;
    int last = -1;
    for (double t = t0 + step / 2; t < t1; t += step) {
        const Eigen::Vector3d p = t * r.dir;
        Eigen::Vector3i c;
        bool inside = true;
        for (int a = 0; a < 3; ++a) {
            const int i = int(std::floor((p[a] - g.origin[a]) / g.cell_size[a]));
            if (i < 0 || i >= g.resolution[a]) inside = false;
            c[a] = std::clamp(i, 0, g.resolution[a] - 1);
        }
        if (!inside) continue;
        const int idx = g.cell_index(c.x(), c.y(), c.z());
        if (idx != last) {
            last = idx;
            if (g.occupied(idx)) out.push_back(idx);
        }
    }
    // Collapse accidental revisits (cannot happen for a straight ray, but the
    // dedup above only guards consecutive samples).
    return out;
}

std::vector<long> recount_points(const std::vector<Eigen::Vector3d>& points,
                                 const Eigen::Vector3d& origin, const Eigen::Vector3d& cell_size,
                                 const Eigen::Vector3i& resolution) {
    std::vector<long> counts(size_t(resolution.x()) * resolution.y() * resolution.z(), 0);
    for (const auto& p : points) {
        int ix = int(std::floor((p.x() - origin.x()) / cell_size.x()));
        int iy = int(std::floor((p.y() - origin.y()) / cell_size.y()));
        int iz = int(std::floor((p.z() - origin.z()) / cell_size.z()));
        ix = std::clamp(ix, 0, resolution.x() - 1);
        iy = std::clamp(iy, 0, resolution.y() - 1);
        iz = std::clamp(iz, 0, resolution.z() - 1);
        counts[size_t((iz * resolution.y() + iy) * resolution.x() + ix)]++;
    }
    return counts;
}

MetricOracle metrics_by_loops(const DepthImage& pred, const DepthImage& gt, const Mask& mask) {
    double se = 0, rel = 0, ae = 0;
    long n = 0, c105 = 0, c110 = 0, c125 = 0;
    for (int v = 0; v < gt.height; ++v) {
        for (int u = 0; u < gt.width; ++u) {
            if (!mask.at(v, u)) continue;
            const double p = pred.at(v, u), t = gt.at(v, u);
            se += (p - t) * (p - t);
            ae += std::fabs(p - t);
            rel += std::fabs(p - t) / t;
            ++n;
            if (p > 0) {
                const double ratio = p > t ? p / t : t / p;
                if (ratio < 1.05) ++c105;
                if (ratio < 1.10) ++c110;
                if (ratio < 1.25) ++c125;
            }
        }
    }
    MetricOracle m{};
    m.rmse = std::sqrt(se / double(n));
    m.mae = ae / double(n);
    m.rel = rel / double(n);
    m.d105 = 100.0 * double(c105) / double(n);
    m.d110 = 100.0 * double(c110) / double(n);
    m.d125 = 100.0 * double(c125) / double(n);
    return m;
}

double max_rel_error(const std::vector<GradProbe>& probes) {
    double worst = 0;
    for (const auto& p : probes) {
        const double denom = std::max({std::fabs(p.analytic), std::fabs(p.numeric), 1e-8});
        worst = std::max(worst, std::fabs(p.analytic - p.numeric) / denom);
    }
    return worst;
}

std::vector<GradProbe> gradient_check(Model& model, const std::function<double()>& loss,
                                      const std::function<void()>& compute_grads,
                                      int probes_per_block, uint64_t seed, double h) {
    model.zero_grad();
    compute_grads();
    // Snapshot analytic gradients before the probing loop mutates parameters.
    std::vector<Eigen::VectorXd> grads;
    for (const auto& view : model.param_views())
        grads.emplace_back(Eigen::Map<const Eigen::VectorXd>(view.grads, view.size()));

    std::vector<GradProbe> probes;
    Rng rng(seed);
    auto views = model.param_views();
    for (size_t b = 0; b < views.size(); ++b) {
        const auto& view = views[b];
        for (int k = 0; k < probes_per_block; ++k) {
            const Eigen::Index i = Eigen::Index(rng.index(uint64_t(view.size())));
            const double saved = view.values[i];
            const double hh = h * std::max(1.0, std::fabs(saved));
            view.values[i] = saved + hh;
            const double fp = loss();
            view.values[i] = saved - hh;
            const double fm = loss();
            view.values[i] = saved;
            probes.push_back({view.name, i, grads[b][i], (fp - fm) / (2 * hh)});
        }
    }
    return probes;
}

// ---------------------------------------------------------------------------
// Membership-based scene marching (shapes re-derived from their definitions).

namespace {

bool inside_object(const SceneSpec& spec, const Eigen::Vector3d& p_world) {
    const ObjectShape& s = spec.object;
    const Eigen::Vector3d p = spec.object_pose.R.transpose() * (p_world - spec.object_pose.t);
    const double rr = p.x() * p.x() + p.y() * p.y();
    switch (s.kind) {
        case ObjectKind::kSphere:
            return p.squaredNorm() <= s.radius * s.radius;
        case ObjectKind::kCylinder:
            return std::fabs(p.z()) <= s.half_height && rr <= s.radius * s.radius;
        case ObjectKind::kCappedCone: {
            if (std::fabs(p.z()) > s.half_height) return false;
            const double f = (p.z() + s.half_height) / (2 * s.half_height);
            const double r = s.radius * (1 - f) + s.radius2 * f;
            return rr <= r * r;
        }
        case ObjectKind::kBox:
            return std::fabs(p.x()) <= s.half_extents.x() &&
                   std::fabs(p.y()) <= s.half_extents.y() &&
                   std::fabs(p.z()) <= s.half_extents.z();
        case ObjectKind::kStemGlass: {
            const double hh = s.half_height;
            // Same part layout as the generator: squat base, stem, bowl.
            const double base_lo = -hh, base_hi = -hh + 0.2 * hh;
            const double stem_hi = -hh + 1.1 * hh;
            if (p.z() >= base_lo && p.z() <= base_hi && rr <= 0.64 * s.radius * s.radius)
                return true;
            if (p.z() > base_hi && p.z() <= stem_hi && rr <= s.radius2 * s.radius2) return true;
            if (p.z() > stem_hi && p.z() <= hh) {
                const double f = (p.z() - stem_hi) / (hh - stem_hi);
                const double r = 0.35 * s.radius * (1 - f) + s.radius * f;
                return rr <= r * r;
            }
            return false;
        }
    }
    return false;
}

double point_segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                              const Eigen::Vector3d& b) {
    const Eigen::Vector3d ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

}  // namespace

double ray_march_depth(const SceneSpec& spec, const Ray& ray, double step, double t_max) {
    std::vector<Capsule> caps;
    if (spec.with_hand)
        caps = hand_capsules(synth_hand(spec.object, spec.object_pose, spec.grip));
    const Eigen::Vector3d n = spec.background.plane_normal;
    const Eigen::Vector3d p0(0, 0, spec.background.plane_depth);

    for (double t = 0.05; t < t_max; t += step) {
        const Eigen::Vector3d p = t * ray.dir;
        bool inside = inside_object(spec, p);
        if (!inside)
            for (const Capsule& c : caps)
                if (point_segment_distance(p, c.a, c.b) <= c.r) {
                    inside = true;
                    break;
                }
        if (!inside)
            for (const auto& box : spec.background.distractors)
                if ((p.array() >= box.lo.array()).all() && (p.array() <= box.hi.array()).all()) {
                    inside = true;
                    break;
                }
        if (!inside && n.dot(p - p0) * n.dot(-p0) < 0) inside = true;  // behind the plane
        if (inside) return p.z();
    }
    return 0.0;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
    Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

}  // namespace rvdr::oracles
