#include "rvdr/datagen.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <thread>

#include "rvdr/errors.hpp"
#include "rvdr/io.hpp"
#include "rvdr/training.hpp"

namespace rvdr {

ObjectKind object_kind_from_string(const std::string& s) {
    if (s == "sphere") return ObjectKind::kSphere;
    if (s == "cylinder") return ObjectKind::kCylinder;
    if (s == "capped_cone") return ObjectKind::kCappedCone;
    if (s == "box") return ObjectKind::kBox;
    if (s == "stem_glass") return ObjectKind::kStemGlass;
    throw ConfigError("unknown object kind '" + s + "'");
}

std::string to_string(ObjectKind k) {
    switch (k) {
        case ObjectKind::kSphere: return "sphere";
        case ObjectKind::kCylinder: return "cylinder";
        case ObjectKind::kCappedCone: return "capped_cone";
        case ObjectKind::kBox: return "box";
        case ObjectKind::kStemGlass: return "stem_glass";
    }
    throw ConfigError("bad object kind value");
}

void CorruptionParams::validate() const {
    auto in01 = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!in01(p_missing) || !in01(p_background) || !in01(p_noise))
        throw ConfigError("corruption probabilities must lie in [0, 1]");
    if (p_missing + p_background + p_noise > 1.0)
        throw ConfigError("corruption probabilities must sum to <= 1");
    if (!(sigma >= 0)) throw ConfigError("corruption sigma must be >= 0");
}

// ---------------------------------------------------------------------------
// Local-frame primitive intersections. Each returns the nearest t > t_min
// with the outward surface normal at the hit (local frame).

namespace {

constexpr double kTMin = 0.05;

struct Hit {
    double t = 0;
    Eigen::Vector3d normal{0, 0, -1};  // local frame
};

std::optional<Hit> hit_sphere(const Eigen::Vector3d& o, const Eigen::Vector3d& d, double radius) {
    const double b = o.dot(d);
    const double c = o.squaredNorm() - radius * radius;
    const double disc = b * b - c;  // |d| == 1
    if (disc < 0) return std::nullopt;
    const double sq = std::sqrt(disc);
    for (double t : {-b - sq, -b + sq}) {
        if (t > kTMin) return Hit{t, (o + t * d) / radius};
    }
    return std::nullopt;
}

// Truncated cone: radius(z) = alpha*z + beta over z in [-hh, hh], plus caps.
// A cylinder is the alpha == 0 case.
std::optional<Hit> hit_frustum(const Eigen::Vector3d& o, const Eigen::Vector3d& d, double r_lo,
                               double r_hi, double hh) {
    const double alpha = (r_hi - r_lo) / (2.0 * hh);
    const double beta = (r_hi + r_lo) / 2.0;
    std::optional<Hit> best;
    auto consider = [&](double t, const Eigen::Vector3d& n) {
        if (t > kTMin && (!best || t < best->t)) best = Hit{t, n};
    };

    const double A = d.x() * d.x() + d.y() * d.y() - alpha * alpha * d.z() * d.z();
    const double rb = alpha * o.z() + beta;
    const double B = 2.0 * (o.x() * d.x() + o.y() * d.y() - alpha * d.z() * rb);
    const double C = o.x() * o.x() + o.y() * o.y() - rb * rb;
    if (std::abs(A) > 1e-15) {
        const double disc = B * B - 4 * A * C;
        if (disc >= 0) {
            const double sq = std::sqrt(disc);
            for (double t : {(-B - sq) / (2 * A), (-B + sq) / (2 * A)}) {
                const Eigen::Vector3d p = o + t * d;
                const double rz = alpha * p.z() + beta;
                if (std::abs(p.z()) <= hh && rz > 0) {
                    Eigen::Vector3d n(2 * p.x(), 2 * p.y(), -2 * alpha * rz);
                    consider(t, n.normalized());
                }
            }
        }
    } else if (std::abs(B) > 1e-15) {
        const double t = -C / B;
        const Eigen::Vector3d p = o + t * d;
        const double rz = alpha * p.z() + beta;
        if (std::abs(p.z()) <= hh && rz > 0)
            consider(t, Eigen::Vector3d(2 * p.x(), 2 * p.y(), -2 * alpha * rz).normalized());
    }

    // End caps.
    if (std::abs(d.z()) > 1e-15) {
        for (int side = 0; side < 2; ++side) {
            const double z = side == 0 ? -hh : hh;
            const double r = side == 0 ? r_lo : r_hi;
            const double t = (z - o.z()) / d.z();
            const Eigen::Vector3d p = o + t * d;
            if (p.x() * p.x() + p.y() * p.y() <= r * r)
                consider(t, Eigen::Vector3d(0, 0, side == 0 ? -1 : 1));
        }
    }
    return best;
}

std::optional<Hit> hit_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                           const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    int axis0 = -1;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-15) {
            if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
            continue;
        }
        double ta = (lo[a] - o[a]) / d[a], tb = (hi[a] - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        if (ta > t0) {
            t0 = ta;
            axis0 = a;
        }
        t1 = std::min(t1, tb);
    }
    if (t0 > t1 || t1 < kTMin) return std::nullopt;
    if (t0 > kTMin && axis0 >= 0) {
        Eigen::Vector3d n = Eigen::Vector3d::Zero();
        n[axis0] = d[axis0] > 0 ? -1.0 : 1.0;
        return Hit{t0, n};
    }
    return std::nullopt;  // origin inside the box does not happen in our scenes
}

std::optional<Hit> hit_capsule(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                               const Capsule& cap) {
    std::optional<Hit> best;
    auto consider = [&](double t, const Eigen::Vector3d& n) {
        if (t > kTMin && (!best || t < best->t)) best = Hit{t, n};
    };
    const Eigen::Vector3d ab = cap.b - cap.a;
    const double len2 = ab.squaredNorm();

    if (len2 > 1e-18) {
        // Infinite cylinder about the segment axis, clipped to it.
        const Eigen::Vector3d ao = o - cap.a;
        const Eigen::Vector3d d_perp = d - d.dot(ab) / len2 * ab;
        const Eigen::Vector3d ao_perp = ao - ao.dot(ab) / len2 * ab;
        const double A = d_perp.squaredNorm();
        const double B = 2 * d_perp.dot(ao_perp);
        const double C = ao_perp.squaredNorm() - cap.r * cap.r;
        if (A > 1e-15) {
            const double disc = B * B - 4 * A * C;
            if (disc >= 0) {
                const double sq = std::sqrt(disc);
                for (double t : {(-B - sq) / (2 * A), (-B + sq) / (2 * A)}) {
                    const Eigen::Vector3d p = o + t * d;
                    const double s = (p - cap.a).dot(ab) / len2;
                    if (s >= 0 && s <= 1) {
                        const Eigen::Vector3d axis_pt = cap.a + s * ab;
                        consider(t, (p - axis_pt) / cap.r);
                    }
                }
            }
        }
    }
    for (const Eigen::Vector3d& c : {cap.a, cap.b}) {
        if (auto h = hit_sphere(o - c, d, cap.r)) consider(h->t, h->normal);
    }
    return best;
}

struct GlassParts {
    double base_r, base_lo, base_hi;
    double stem_r, stem_lo, stem_hi;
    double bowl_r_lo, bowl_r_hi, bowl_lo, bowl_hi;
};

GlassParts glass_parts(const ObjectShape& s) {
    const double hh = s.half_height;
    GlassParts g;
    g.base_r = 0.8 * s.radius;
    g.base_lo = -hh;
    g.base_hi = -hh + 0.2 * hh;
    g.stem_r = s.radius2;
    g.stem_lo = g.base_hi;
    g.stem_hi = -hh + 1.1 * hh;
    g.bowl_r_lo = 0.35 * s.radius;
    g.bowl_r_hi = s.radius;
    g.bowl_lo = g.stem_hi;
    g.bowl_hi = hh;
    return g;
}

std::optional<Hit> hit_shape_local(const ObjectShape& s, const Eigen::Vector3d& o,
                                   const Eigen::Vector3d& d) {
    switch (s.kind) {
        case ObjectKind::kSphere:
            return hit_sphere(o, d, s.radius);
        case ObjectKind::kCylinder:
            return hit_frustum(o, d, s.radius, s.radius, s.half_height);
        case ObjectKind::kCappedCone:
            return hit_frustum(o, d, s.radius, s.radius2, s.half_height);
        case ObjectKind::kBox:
            return hit_box(o, d, -s.half_extents, s.half_extents);
        case ObjectKind::kStemGlass: {
            const GlassParts g = glass_parts(s);
            std::optional<Hit> best;
            auto shifted = [&](double lo, double hi, double r0, double r1) -> std::optional<Hit> {
                const double c = 0.5 * (lo + hi), hh = 0.5 * (hi - lo);
                Eigen::Vector3d oc = o;
                oc.z() -= c;
                auto h = hit_frustum(oc, d, r0, r1, hh);
                return h;
            };
            for (auto h : {shifted(g.base_lo, g.base_hi, g.base_r, g.base_r),
                           shifted(g.stem_lo, g.stem_hi, g.stem_r, g.stem_r),
                           shifted(g.bowl_lo, g.bowl_hi, g.bowl_r_lo, g.bowl_r_hi)}) {
                if (h && (!best || h->t < best->t)) best = h;
            }
            return best;
        }
    }
    return std::nullopt;
}

bool contains_local(const ObjectShape& s, const Eigen::Vector3d& p) {
    switch (s.kind) {
        case ObjectKind::kSphere:
            return p.squaredNorm() <= s.radius * s.radius;
        case ObjectKind::kCylinder:
            return std::abs(p.z()) <= s.half_height &&
                   p.head<2>().squaredNorm() <= s.radius * s.radius;
        case ObjectKind::kCappedCone: {
            if (std::abs(p.z()) > s.half_height) return false;
            const double r = s.radius + (s.radius2 - s.radius) *
                                            (p.z() + s.half_height) / (2.0 * s.half_height);
            return p.head<2>().squaredNorm() <= r * r;
        }
        case ObjectKind::kBox:
            return (p.cwiseAbs().array() <= s.half_extents.array()).all();
        case ObjectKind::kStemGlass: {
            const GlassParts g = glass_parts(s);
            const double rr = p.head<2>().squaredNorm();
            if (p.z() >= g.base_lo && p.z() <= g.base_hi && rr <= g.base_r * g.base_r) return true;
            if (p.z() >= g.stem_lo && p.z() <= g.stem_hi && rr <= g.stem_r * g.stem_r) return true;
            if (p.z() >= g.bowl_lo && p.z() <= g.bowl_hi) {
                const double r = g.bowl_r_lo + (g.bowl_r_hi - g.bowl_r_lo) *
                                                   (p.z() - g.bowl_lo) / (g.bowl_hi - g.bowl_lo);
                if (rr <= r * r) return true;
            }
            return false;
        }
    }
    return false;
}

}  // namespace

bool object_contains(const ObjectShape& shape, const Pose& pose, const Eigen::Vector3d& p) {
    return contains_local(shape, pose.to_local(p));
}

std::optional<double> object_ray_hit(const ObjectShape& shape, const Pose& pose,
                                     const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
    const Eigen::Vector3d o = pose.R.transpose() * (origin - pose.t);
    const Eigen::Vector3d d = pose.R.transpose() * dir;
    if (auto h = hit_shape_local(shape, o, d)) return h->t;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Hand synthesis

std::vector<Capsule> hand_capsules(const HandKeypoints& kp, double radius) {
    std::vector<Capsule> out;
    out.reserve(hand_bones().size());
    for (const auto& [a, b] : hand_bones())
        out.push_back({kp.points.row(a), kp.points.row(b), radius});
    return out;
}

namespace {

// Contact heights valid per shape, and the exact surface point at (theta, h).
struct GripSurface {
    double h_min, h_max;     // usable contact heights (local z)
    double grip_radius;      // boundary radius near the grip height
};

GripSurface grip_surface(const ObjectShape& s, double h_grip) {
    GripSurface g{};
    switch (s.kind) {
        case ObjectKind::kSphere:
            g.h_min = -0.6 * s.radius;
            g.h_max = 0.6 * s.radius;
            g.grip_radius = std::sqrt(std::max(1e-12, s.radius * s.radius - h_grip * h_grip));
            break;
        case ObjectKind::kCylinder:
            g.h_min = -0.85 * s.half_height;
            g.h_max = 0.85 * s.half_height;
            g.grip_radius = s.radius;
            break;
        case ObjectKind::kCappedCone: {
            g.h_min = -0.85 * s.half_height;
            g.h_max = 0.85 * s.half_height;
            g.grip_radius = s.radius + (s.radius2 - s.radius) *
                                           (h_grip + s.half_height) / (2.0 * s.half_height);
            break;
        }
        case ObjectKind::kBox:
            g.h_min = -0.85 * s.half_extents.z();
            g.h_max = 0.85 * s.half_extents.z();
            g.grip_radius = s.half_extents.head<2>().norm();
            break;
        case ObjectKind::kStemGlass: {
            const GlassParts gp = glass_parts(s);
            const double margin = 0.1 * (gp.stem_hi - gp.stem_lo);
            g.h_min = gp.stem_lo + margin;
            g.h_max = gp.stem_hi - margin;
            g.grip_radius = gp.stem_r;
            break;
        }
    }
    return g;
}

Eigen::Vector3d surface_point(const ObjectShape& s, double theta, double h) {
    const double ct = std::cos(theta), st = std::sin(theta);
    switch (s.kind) {
        case ObjectKind::kSphere: {
            const double rho = std::sqrt(std::max(1e-12, s.radius * s.radius - h * h));
            return {rho * ct, rho * st, h};
        }
        case ObjectKind::kCylinder:
            return {s.radius * ct, s.radius * st, h};
        case ObjectKind::kCappedCone: {
            const double r = s.radius + (s.radius2 - s.radius) *
                                            (h + s.half_height) / (2.0 * s.half_height);
            return {r * ct, r * st, h};
        }
        case ObjectKind::kBox: {
            const double sx = std::abs(ct) / s.half_extents.x();
            const double sy = std::abs(st) / s.half_extents.y();
            const double scale = 1.0 / std::max(sx, sy);
            return {scale * ct, scale * st, h};
        }
        case ObjectKind::kStemGlass: {
            const GlassParts g = glass_parts(s);
            return {g.stem_r * ct, g.stem_r * st, h};
        }
    }
    return Eigen::Vector3d::Zero();
}

}  // namespace

HandKeypoints synth_hand(const ObjectShape& shape, const Pose& pose, const GripParams& grip) {
    const double h_mid = 0.5 * (grip_surface(shape, 0).h_min + grip_surface(shape, 0).h_max);
    GripSurface gs = grip_surface(shape, h_mid);
    const double h_grip = std::clamp(grip.height, gs.h_min, gs.h_max);
    gs = grip_surface(shape, h_grip);
    if (2.0 * gs.grip_radius >= 0.12)
        throw std::invalid_argument("synth_hand: ungraspable object dimensions");

    // Finger contacts around the grip circle; fingers advance along the axis,
    // the thumb opposes from the other side.
    const double gap = std::min(0.016, (gs.h_max - gs.h_min) / 5.0);
    HandKeypoints kp;
    const double theta_w = grip.angle;
    const Eigen::Vector3d wrist_local =
        surface_point(shape, theta_w, std::clamp(h_grip - 0.02, gs.h_min, gs.h_max)) +
        grip.wrist_offset *
            Eigen::Vector3d(std::cos(theta_w), std::sin(theta_w), 0.0);
    kp.points.row(HandKeypoints::kWrist) = wrist_local;

    for (int f = 0; f < 5; ++f) {
        double theta_tip, theta_dip, h_f;
        if (f == 0) {  // thumb wraps the other way
            theta_tip = theta_w - 1.9;
            theta_dip = theta_w - 1.45;
            h_f = std::clamp(h_grip + 0.5 * gap, gs.h_min, gs.h_max);
        } else {
            theta_tip = theta_w + 1.9 + grip.spread * 0.3 * (f - 2.5);
            theta_dip = theta_w + 1.45 + grip.spread * 0.3 * (f - 2.5);
            h_f = std::clamp(h_grip + gap * (2.5 - f), gs.h_min, gs.h_max);
        }
        const Eigen::Vector3d tip = surface_point(shape, theta_tip, h_f);
        const Eigen::Vector3d dip = surface_point(shape, theta_dip, h_f);
        const Eigen::Vector3d mcp = wrist_local + 0.45 * (dip - wrist_local);
        const Eigen::Vector3d pip = wrist_local + 0.72 * (dip - wrist_local);
        kp.points.row(1 + 4 * f + 0) = mcp;
        kp.points.row(1 + 4 * f + 1) = pip;
        kp.points.row(1 + 4 * f + 2) = dip;
        kp.points.row(1 + 4 * f + 3) = tip;
    }

    for (int i = 0; i < 21; ++i)
        kp.points.row(i) = pose.to_world(kp.points.row(i).transpose()).transpose();
    kp.validate();
    return kp;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

enum class EntityId { kNone, kObject, kHand, kPlane, kDistractor };

struct SceneHit {
    EntityId entity = EntityId::kNone;
    double t = std::numeric_limits<double>::infinity();
    Eigen::Vector3d normal{0, 0, -1};  // camera frame
    Eigen::Vector3d color{0, 0, 0};
};

struct Tracer {
    const SceneSpec& spec;
    std::vector<Capsule> capsules;
    bool has_hand = false;

    SceneHit trace(const Eigen::Vector3d& dir, bool include_object) const {
        SceneHit best;
        if (include_object) {
            const Eigen::Vector3d o = spec.object_pose.R.transpose() * (-spec.object_pose.t);
            const Eigen::Vector3d d = spec.object_pose.R.transpose() * dir;
            if (auto h = hit_shape_local(spec.object, o, d); h && h->t < best.t) {
                best = {EntityId::kObject, h->t, spec.object_pose.R * h->normal,
                        spec.object_color};
            }
        }
        if (has_hand) {
            for (const Capsule& cap : capsules) {
                if (auto h = hit_capsule(Eigen::Vector3d::Zero(), dir, cap); h && h->t < best.t)
                    best = {EntityId::kHand, h->t, h->normal, spec.hand_color};
            }
        }
        for (const auto& box : spec.background.distractors) {
            if (auto h = hit_box(Eigen::Vector3d::Zero(), dir, box.lo, box.hi); h && h->t < best.t)
                best = {EntityId::kDistractor, h->t, h->normal, box.color};
        }
        // Background plane through (0, 0, plane_depth).
        const Eigen::Vector3d n = spec.background.plane_normal;
        const Eigen::Vector3d p0(0, 0, spec.background.plane_depth);
        const double dn = dir.dot(n);
        if (std::abs(dn) > 1e-12) {
            const double t = p0.dot(n) / dn;
            if (t > kTMin && t < best.t) {
                const Eigen::Vector3d hit = t * dir;
                // Checker texture in the plane's own axes.
                const Eigen::Vector3d ex = n.cross(Eigen::Vector3d::UnitY()).normalized();
                const Eigen::Vector3d ey = n.cross(ex);
                const double cu = hit.dot(ex), cv = hit.dot(ey);
                const double cell = spec.background.checker;
                const long parity = (long(std::floor(cu / cell)) + long(std::floor(cv / cell))) & 1;
                best = {EntityId::kPlane, t, n,
                        parity ? spec.background.plane_color_a : spec.background.plane_color_b};
            }
        }
        return best;
    }
};

}  // namespace

RenderResult render_perfect(const SceneSpec& spec) {
    spec.intrinsics.validate();
    const int h = spec.intrinsics.height, w = spec.intrinsics.width;
    RenderResult out;
    out.depth = DepthImage(h, w);
    out.depth_no_object = DepthImage(h, w);
    out.object_mask = Mask(h, w);
    out.hand_mask = Mask(h, w);
    out.rgb = RgbImage(h, w);

    Tracer tracer{spec, {}, spec.with_hand};
    if (spec.with_hand)
        tracer.capsules = hand_capsules(synth_hand(spec.object, spec.object_pose, spec.grip));

    Rng rng(derive_seed(spec.seed, 0xA11CE));
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            const Ray ray = pixel_ray(spec.intrinsics, u, v);
            const SceneHit hit = tracer.trace(ray.dir, true);
            const int p = v * w + u;
            if (hit.entity != EntityId::kNone) {
                out.depth.values[size_t(p)] = hit.t * ray.dir.z();
                if (hit.entity == EntityId::kObject) out.object_mask.values[size_t(p)] = 1;
                if (hit.entity == EntityId::kHand) out.hand_mask.values[size_t(p)] = 1;
                const double lambert = 0.35 + 0.65 * std::max(0.0, -hit.normal.dot(ray.dir));
                for (int c = 0; c < 3; ++c)
                    out.rgb.m(c, p) =
                        std::clamp(hit.color[c] * lambert + rng.uniform(-0.02, 0.02), 0.0, 1.0);
            }
            const SceneHit bg = tracer.trace(ray.dir, false);
            if (bg.entity != EntityId::kNone)
                out.depth_no_object.values[size_t(p)] = bg.t * ray.dir.z();
        }
    }
    if (out.object_mask.count() == 0) throw DataError("degenerate spec: object not visible");
    return out;
}

DepthImage corrupt_depth(const DepthImage& perfect, const DepthImage& background,
                         const Mask& object_mask, const CorruptionParams& params, uint64_t seed) {
    params.validate();
    DepthImage out = perfect;
    Rng rng(seed);
    for (int v = 0; v < perfect.height; ++v) {
        for (int u = 0; u < perfect.width; ++u) {
            if (!object_mask.at(v, u)) continue;
            const double roll = rng.uniform();
            if (roll < params.p_missing) {
                out.at(v, u) = 0.0;
            } else if (roll < params.p_missing + params.p_background) {
                out.at(v, u) = background.at(v, u);
            } else if (roll < params.p_missing + params.p_background + params.p_noise) {
                out.at(v, u) = std::max(1e-4, perfect.at(v, u) + rng.normal(0.0, params.sigma));
            }
        }
    }
    return out;
}

namespace {

void augment_rgb(RgbImage& img, Rng& rng) {
    // Channel gains, optional box blur, bright patch, extra noise.
    const double gains[3] = {rng.uniform(0.85, 1.15), rng.uniform(0.85, 1.15),
                             rng.uniform(0.85, 1.15)};
    for (int c = 0; c < 3; ++c) img.m.row(c) *= gains[c];
    if (rng.uniform() < 0.5) {
        Eigen::MatrixXd blurred = img.m;
        for (int v = 0; v < img.height; ++v)
            for (int u = 0; u < img.width; ++u) {
                Eigen::Vector3d acc = Eigen::Vector3d::Zero();
                int cnt = 0;
                for (int dv = -1; dv <= 1; ++dv)
                    for (int du = -1; du <= 1; ++du) {
                        const int y = v + dv, x = u + du;
                        if (y < 0 || y >= img.height || x < 0 || x >= img.width) continue;
                        acc += img.m.col(y * img.width + x);
                        ++cnt;
                    }
                blurred.col(v * img.width + u) = acc / cnt;
            }
        img.m = blurred;
    }
    if (rng.uniform() < 0.5) {
        const int cu = int(rng.index(uint64_t(img.width)));
        const int cv = int(rng.index(uint64_t(img.height)));
        const double rad = rng.uniform(0.05, 0.2) * img.width;
        for (int v = 0; v < img.height; ++v)
            for (int u = 0; u < img.width; ++u)
                if ((u - cu) * (u - cu) + (v - cv) * (v - cv) < rad * rad)
                    img.m.col(v * img.width + u).array() += 0.25;
    }
    for (int p = 0; p < img.width * img.height; ++p)
        for (int c = 0; c < 3; ++c)
            img.m(c, p) = std::clamp(img.m(c, p) + rng.normal(0.0, 0.02), 0.0, 1.0);
}

// Quantize to the on-disk precision so in-memory records match their files.
void quantize(SceneRecord& s) {
    for (double& v : s.depth_raw.values) v = double(float(v));
    for (double& v : s.depth_gt.values) v = double(float(v));
    for (int p = 0; p < s.rgb.width * s.rgb.height; ++p)
        for (int c = 0; c < 3; ++c)
            s.rgb.m(c, p) = std::lround(std::clamp(s.rgb.m(c, p), 0.0, 1.0) * 255.0) / 255.0;
}

}  // namespace

SceneRecord make_scene(const SceneSpec& spec) {
    const RenderResult render = render_perfect(spec);
    SceneRecord s;
    s.intrinsics = spec.intrinsics;
    s.rgb = render.rgb;
    s.depth_gt = render.depth;
    s.object_mask = render.object_mask;
    s.hand_mask = render.hand_mask;
    s.keypoints = spec.with_hand ? synth_hand(spec.object, spec.object_pose, spec.grip)
                                 : HandKeypoints{};
    if (spec.rgb_augmentation) {
        Rng rng(derive_seed(spec.seed, 0xB10B));
        augment_rgb(s.rgb, rng);
    }
    s.depth_raw = corrupt_depth(render.depth, render.depth_no_object, render.object_mask,
                                spec.corruption, derive_seed(spec.seed, 0xC0BB));
    quantize(s);
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Dataset sampling

CameraIntrinsics default_intrinsics(int width, int height, double focal_scale) {
    CameraIntrinsics k;
    k.width = width;
    k.height = height;
    k.fx = k.fy = focal_scale * width;
    k.cx = width / 2.0;
    k.cy = height / 2.0;
    return k;
}

ObjectKind sample_kind(const std::vector<std::pair<ObjectKind, double>>& dist, Rng& rng) {
    double total = 0;
    for (const auto& [k, p] : dist) total += p;
    if (!(total > 0)) throw ConfigError("kind distribution has zero mass");
    double roll = rng.uniform() * total;
    for (const auto& [k, p] : dist) {
        roll -= p;
        if (roll < 0) return k;
    }
    return dist.back().first;
}

namespace {

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

ObjectShape sample_shape(ObjectKind kind, Rng& rng) {
    ObjectShape s;
    s.kind = kind;
    switch (kind) {
        case ObjectKind::kSphere:
            s.radius = rng.uniform(0.03, 0.045);
            break;
        case ObjectKind::kCylinder:
            s.radius = rng.uniform(0.025, 0.04);
            s.half_height = rng.uniform(0.06, 0.11);
            break;
        case ObjectKind::kCappedCone:
            s.radius = rng.uniform(0.03, 0.045);
            s.radius2 = rng.uniform(0.015, 0.03);
            s.half_height = rng.uniform(0.05, 0.09);
            break;
        case ObjectKind::kBox:
            s.half_extents = {rng.uniform(0.02, 0.035), rng.uniform(0.02, 0.035),
                              rng.uniform(0.05, 0.09)};
            break;
        case ObjectKind::kStemGlass:
            s.radius = rng.uniform(0.03, 0.04);
            s.radius2 = rng.uniform(0.008, 0.012);
            s.half_height = rng.uniform(0.08, 0.1);
            break;
    }
    return s;
}

}  // namespace

SceneSpec sample_scene_spec(const DatasetParams& params, uint64_t scene_seed) {
    Rng rng(scene_seed);
    SceneSpec spec;
    spec.seed = scene_seed;
    spec.intrinsics = default_intrinsics(params.width, params.height, params.focal_scale);
    spec.corruption = params.corruption;
    spec.rgb_augmentation = params.rgb_augmentation;

    spec.object = sample_shape(sample_kind(params.kind_distribution, rng), rng);
    spec.object_pose.R = random_rotation(rng);
    const double z = rng.uniform(0.55, 0.95);
    const double lateral = 0.3 * z * (params.width / 2.0) / spec.intrinsics.fx;
    spec.object_pose.t = {rng.uniform(-lateral, lateral), rng.uniform(-lateral, lateral), z};
    spec.object_color = {rng.uniform(0.55, 0.9), rng.uniform(0.55, 0.9), rng.uniform(0.55, 0.9)};

    spec.grip.angle = rng.uniform(0.0, 2.0 * M_PI);
    spec.grip.spread = rng.uniform(0.2, 0.35);
    spec.grip.wrist_offset = rng.uniform(0.03, 0.05);
    spec.grip.height = rng.uniform(-0.03, 0.03);

    spec.background.plane_depth = rng.uniform(1.6, 2.4);
    spec.background.plane_normal =
        Eigen::Vector3d(rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15), -1.0).normalized();
    spec.background.plane_color_a = {rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7),
                                     rng.uniform(0.3, 0.7)};
    spec.background.plane_color_b = spec.background.plane_color_a * 0.6;
    for (int i = 0; i < 2; ++i) {
        BackgroundSpec::Box box;
        const double bz = rng.uniform(1.2, 1.9);
        const double side = i == 0 ? -1.0 : 1.0;
        const Eigen::Vector3d center(side * rng.uniform(0.25, 0.55) * bz / 2.0,
                                     rng.uniform(-0.2, 0.2) * bz / 2.0, bz);
        const Eigen::Vector3d half(rng.uniform(0.04, 0.1), rng.uniform(0.04, 0.1),
                                   rng.uniform(0.04, 0.1));
        box.lo = center - half;
        box.hi = center + half;
        box.color = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
        spec.background.distractors.push_back(box);
    }
    return spec;
}

std::vector<GeneratedScene> generate_dataset(const DatasetParams& params,
                                             const std::string& out_dir,
                                             const std::string& config_hash, int threads) {
    namespace fs = std::filesystem;
    if (params.n_scenes < 1) throw ConfigError("n_scenes must be >= 1");
    params.corruption.validate();
    fs::create_directories(out_dir + "/scenes");

    const int n = params.n_scenes;
    const int n_train = int(0.7 * n), n_val = int(0.2 * n);
    std::vector<GeneratedScene> rows;
    rows.resize(size_t(n));
    std::vector<std::string> errors;
    errors.resize(size_t(n));

    auto worker = [&](int tid, int stride) {
        for (int i = tid; i < n; i += stride) {
            char id[16];
            std::snprintf(id, sizeof(id), "%06d", i);
            try {
                const uint64_t scene_seed = derive_seed(params.seed, uint64_t(i));
                SceneSpec spec = sample_scene_spec(params, scene_seed);
                const SceneRecord record = make_scene(spec);
                if (backproject(record.depth_raw, record.intrinsics).size() == 0)
                    throw DataError("scene has no valid corrupted-depth point");
                write_scene(out_dir + "/scenes/" + id, record);
                GeneratedScene g;
                g.id = id;
                g.kind = spec.object.kind;
                g.seed = scene_seed;
                g.split = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
                g.unknown_category =
                    std::find(params.unknown_kinds.begin(), params.unknown_kinds.end(),
                              spec.object.kind) != params.unknown_kinds.end();
                g.supervised_fraction = supervised_ray_fraction(record);
                rows[size_t(i)] = g;
            } catch (const std::exception& e) {
                errors[size_t(i)] = std::string("scene ") + id + ": " + e.what();
            }
        }
    };
    const int nthreads = std::max(1, std::min(threads, n));
    if (nthreads == 1) {
        worker(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker, t, nthreads);
        for (auto& t : pool) t.join();
    }
    for (const std::string& e : errors)
        if (!e.empty()) throw DataError(e);

    const CameraIntrinsics k = default_intrinsics(params.width, params.height, params.focal_scale);
    json manifest;
    manifest["config_hash"] = config_hash;
    manifest["master_seed"] = params.seed;
    manifest["intrinsics"] = {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
                              {"width", k.width}, {"height", k.height}};
    manifest["corruption"] = {{"p_missing", params.corruption.p_missing},
                              {"p_background", params.corruption.p_background},
                              {"p_noise", params.corruption.p_noise},
                              {"sigma", params.corruption.sigma}};
    manifest["corruption_note"] =
        "corruption parameters are modeling assumptions, not measured sensor statistics";
    manifest["split_ratio"] = "7:2:1";
    json scenes = json::array();
    for (const auto& g : rows) {
        scenes.push_back({{"id", g.id},
                          {"kind", to_string(g.kind)},
                          {"seed", g.seed},
                          {"split", g.split},
                          {"unknown_category", g.unknown_category},
                          {"supervised_fraction", g.supervised_fraction}});
    }
    manifest["scenes"] = scenes;
    save_json(out_dir + "/manifest.json", manifest);
    return rows;
}

}  // namespace rvdr
