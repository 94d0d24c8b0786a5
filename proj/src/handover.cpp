#include "rvdr/handover.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "rvdr/errors.hpp"
#include "rvdr/training.hpp"

namespace rvdr {

using nlohmann::json;

void Grasp::validate() const {
    if ((rotation * rotation.transpose() - Eigen::Matrix3d::Identity()).norm() > 1e-9)
        throw std::invalid_argument("grasp: rotation not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > 1e-9)
        throw std::invalid_argument("grasp: rotation not proper");
    if (!(width > 0 && width <= kMaxGraspWidth))
        throw std::invalid_argument("grasp: width out of range");
}

std::string to_string(Phase p) {
    switch (p) {
        case Phase::kWaitObserve: return "wait_observe";
        case Phase::kApproachReact: return "approach_react";
        case Phase::kGraspRetrieve: return "grasp_retrieve";
        case Phase::kDone: return "done";
        case Phase::kFailed: return "failed";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Grasp sampling

std::vector<Grasp> sample_grasps(const std::vector<Eigen::Vector3d>& points,
                                 const std::vector<Eigen::Vector3d>& normals, int n, Rng& rng) {
    std::vector<Grasp> out;
    if (n <= 0) return out;
    if (points.size() < 10 || points.size() != normals.size())
        throw std::invalid_argument("sample_grasps: need >= 10 oriented points");

    const double cos_tol = std::cos(8.0 * M_PI / 180.0);
    const long budget = 60L * n;
    for (long attempt = 0; attempt < budget && int(out.size()) < n; ++attempt) {
        const size_t i = size_t(rng.index(points.size()));
        const size_t j = size_t(rng.index(points.size()));
        if (i == j) continue;
        const Eigen::Vector3d diff = points[j] - points[i];
        const double width = diff.norm();
        if (width < 0.008 || width > kMaxGraspWidth) continue;
        const Eigen::Vector3d axis = diff / width;
        // Fingers close along +-axis; outward normals must oppose it.
        const double anti_i = -normals[i].dot(axis);
        const double anti_j = normals[j].dot(axis);
        if (anti_i < cos_tol || anti_j < cos_tol) continue;

        const double quality = 0.5 * (anti_i + anti_j);
        Grasp g;
        g.width = width;
        g.score = std::clamp(quality * (1.0 - width / kMaxGraspWidth), 0.0, 1.0);
        g.translation = 0.5 * (points[i] + points[j]);

        // Approach perpendicular to the closing axis, biased toward the view
        // direction; both signs are emitted and the collision filter decides.
        Eigen::Vector3d view = g.translation.normalized();
        Eigen::Vector3d approach = view - view.dot(axis) * axis;
        if (approach.norm() < 1e-6) approach = axis.unitOrthogonal();
        approach.normalize();
        for (int sign = 0; sign < 2; ++sign) {
            const Eigen::Vector3d z = sign == 0 ? approach : (-approach).eval();
            g.rotation.col(0) = axis;
            g.rotation.col(2) = z;
            g.rotation.col(1) = z.cross(axis);
            g.validate();
            out.push_back(g);
            if (int(out.size()) >= n) break;
        }
    }
    return out;
}

std::vector<Grasp> sample_grasps_from_depth(const DepthImage& restored, const Mask& object_mask,
                                            const CameraIntrinsics& k, int n, Rng& rng) {
    const NormalMap nm = normals_from_depth(restored, k, object_mask);
    std::vector<Eigen::Vector3d> points, normals;
    for (int v = 0; v < restored.height; ++v) {
        for (int u = 0; u < restored.width; ++u) {
            if (!nm.valid.at(v, u)) continue;
            const double d = restored.at(v, u);
            if (!(d > 0)) continue;
            // Depth edges produce wild normals; reject jumpy neighborhoods.
            const double jump = std::max(
                std::max(std::abs(restored.at(v, u - 1) - d), std::abs(restored.at(v, u + 1) - d)),
                std::max(std::abs(restored.at(v - 1, u) - d), std::abs(restored.at(v + 1, u) - d)));
            if (jump > 0.03) continue;
            const Ray ray = pixel_ray(k, u, v);
            points.push_back(ray.dir / ray.dir.z() * d);
            normals.push_back(nm.n.col(v * restored.width + u));
        }
    }
    if (points.size() < 10) return {};
    return sample_grasps(points, normals, n, rng);
}

double rescore(const Grasp& g, const Eigen::Vector3d& v_r2h, const Eigen::Vector3d& v_u2d,
               double w_s, double w_r2h, double w_u2d) {
    if (std::abs(v_r2h.norm() - 1.0) > 1e-9 || std::abs(v_u2d.norm() - 1.0) > 1e-9)
        throw std::invalid_argument("rescore: direction vectors must be unit");
    return w_s * g.score + w_r2h * v_r2h.dot(g.rotation * v_r2h) +
           w_u2d * v_u2d.dot(g.rotation * v_u2d);
}

// ---------------------------------------------------------------------------
// Collision world

namespace {

double segment_segment_distance(const Eigen::Vector3d& p1, const Eigen::Vector3d& q1,
                                const Eigen::Vector3d& p2, const Eigen::Vector3d& q2) {
    // Standard clamped closest-point computation.
    const Eigen::Vector3d d1 = q1 - p1, d2 = q2 - p2, r = p1 - p2;
    const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
    double s, t;
    constexpr double eps = 1e-12;
    if (a <= eps && e <= eps) return r.norm();
    if (a <= eps) {
        s = 0;
        t = std::clamp(f / e, 0.0, 1.0);
    } else {
        const double c = d1.dot(r);
        if (e <= eps) {
            t = 0;
            s = std::clamp(-c / a, 0.0, 1.0);
        } else {
            const double b = d1.dot(d2);
            const double denom = a * e - b * b;
            s = denom > eps ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
            t = (b * s + f) / e;
            if (t < 0) {
                t = 0;
                s = std::clamp(-c / a, 0.0, 1.0);
            } else if (t > 1) {
                t = 1;
                s = std::clamp((b - c) / a, 0.0, 1.0);
            }
        }
    }
    return (p1 + s * d1 - (p2 + t * d2)).norm();
}

double point_box_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& lo,
                          const Eigen::Vector3d& hi) {
    const Eigen::Vector3d clamped = p.cwiseMax(lo).cwiseMin(hi);
    return (p - clamped).norm();
}

}  // namespace

bool segment_clear(const CollisionWorld& world, const Eigen::Vector3d& a,
                   const Eigen::Vector3d& b, double radius) {
    for (const Capsule& cap : world.hand)
        if (segment_segment_distance(a, b, cap.a, cap.b) < radius + cap.r) return false;
    for (const Eigen::Vector3d& p : {a, b})
        if (world.plane_normal.dot(p - world.plane_point) * world.plane_normal.dot(
                Eigen::Vector3d::Zero() - world.plane_point) < 0)
            return false;  // crossed to the far side of the plane
    // Conservative sampled clearance against boxes.
    for (const auto& box : world.boxes) {
        for (int s = 0; s <= 16; ++s) {
            const Eigen::Vector3d p = a + (b - a) * (double(s) / 16.0);
            if (point_box_distance(p, box.lo, box.hi) < radius) return false;
        }
    }
    return true;
}

std::optional<GraspSelection> select_grasp(const std::vector<Grasp>& grasps,
                                           const CollisionWorld& world,
                                           const Eigen::Vector3d& v_r2h,
                                           const Eigen::Vector3d& v_u2d) {
    int best = -1;
    double best_c = 0, best_s = 0;
    for (size_t i = 0; i < grasps.size(); ++i) {
        const Grasp& g = grasps[i];
        const Eigen::Vector3d closing = g.rotation.col(0);
        const Eigen::Vector3d approach = g.rotation.col(2);
        const Eigen::Vector3d f1 = g.translation - 0.5 * g.width * closing;
        const Eigen::Vector3d f2 = g.translation + 0.5 * g.width * closing;
        // Closing region must not contain hand geometry.
        bool hand_hit = false;
        for (const Capsule& cap : world.hand)
            if (segment_segment_distance(f1, f2, cap.a, cap.b) < 0.006 + cap.r) hand_hit = true;
        if (hand_hit) continue;
        // Approach corridor from the pre-grasp to the grasp.
        const Eigen::Vector3d pre = g.translation - kPregraspBack * approach;
        if (!segment_clear(world, pre, g.translation - 0.02 * approach, 0.012)) continue;

        const double c = rescore(g, v_r2h, v_u2d);
        if (best < 0 || c > best_c || (c == best_c && g.score > best_s)) {
            best = int(i);
            best_c = c;
            best_s = g.score;
        }
    }
    if (best < 0) return std::nullopt;
    GraspSelection sel;
    sel.grasp = grasps[size_t(best)];
    sel.pregrasp.R = sel.grasp.rotation;
    sel.pregrasp.p = sel.grasp.translation - kPregraspBack * sel.grasp.rotation.col(2);
    sel.combined_score = best_c;
    return sel;
}

// ---------------------------------------------------------------------------
// Hand tracking

RigidMotion estimate_hand_motion(const HandKeypoints& initial, const HandKeypoints& current) {
    const Eigen::Vector3d wi = initial.wrist(), wc = current.wrist();
    Eigen::Matrix<double, 21, 3> a = initial.points.rowwise() - wi.transpose();
    Eigen::Matrix<double, 21, 3> b = current.points.rowwise() - wc.transpose();
    const Eigen::Matrix3d h = a.transpose() * b;

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d sv = svd.singularValues();
    if (!(sv[0] > 1e-12) || sv[1] < 1e-9 * sv[0])
        throw std::invalid_argument("degenerate hand configuration");

    Eigen::Matrix3d v = svd.matrixV();
    Eigen::Matrix3d r = v * svd.matrixU().transpose();
    if (r.determinant() < 0) {
        v.col(2) *= -1.0;
        r = v * svd.matrixU().transpose();
    }
    return {r, wc - wi};
}

GripperPose update_pregrasp(const GripperPose& initial, const RigidMotion& motion,
                            const Eigen::Vector3d& initial_wrist) {
    GripperPose out;
    out.p = motion.R * (initial.p - initial_wrist) + initial_wrist + motion.T;
    out.R = motion.R * initial.R;
    return out;
}

// ---------------------------------------------------------------------------
// State machine

namespace {

constexpr double kStableRmse = 0.005;       // m
constexpr int kStableFrames = 3;
constexpr double kFingerDepth = 0.07;       // finger length behind the fingertip plane
constexpr double kReachPosTol = 0.005;      // m
constexpr double kReachAngTol = 2.0 * M_PI / 180.0;
const Eigen::Vector3d kGripperHome{0.0, 0.30, 0.15};

double masked_rmse_change(const DepthImage& a, const DepthImage& b, const Mask& mask) {
    double se = 0;
    long n = 0;
    for (int v = 0; v < a.height; ++v)
        for (int u = 0; u < a.width; ++u)
            if (mask.at(v, u)) {
                const double d = a.at(v, u) - b.at(v, u);
                se += d * d;
                ++n;
            }
    return n == 0 ? std::numeric_limits<double>::infinity() : std::sqrt(se / double(n));
}

void move_toward(GripperPose& g, const GripperPose& target, double max_speed,
                 double max_ang_speed) {
    const Eigen::Vector3d to = target.p - g.p;
    const double dist = to.norm();
    g.p = dist <= max_speed ? target.p : (g.p + to * (max_speed / dist)).eval();

    const Eigen::Matrix3d err = target.R * g.R.transpose();
    const Eigen::AngleAxisd aa(err);
    if (std::abs(aa.angle()) <= max_ang_speed) {
        g.R = target.R;
    } else {
        g.R = Eigen::AngleAxisd(std::copysign(max_ang_speed, aa.angle()), aa.axis()) * g.R;
    }
}

bool pose_reached(const GripperPose& g, const GripperPose& target) {
    const Eigen::AngleAxisd aa(target.R * g.R.transpose());
    return (g.p - target.p).norm() <= kReachPosTol && std::abs(aa.angle()) <= kReachAngTol;
}

}  // namespace

HandoverState step(HandoverState state, const TickInput& input) {
    const ScenarioScript& script = *input.script;
    const SceneRecord& scene = *input.scene;
    if (state.phase == Phase::kDone || state.phase == Phase::kFailed) return state;
    if (state.tick == 0) state.gripper = {Eigen::Matrix3d::Identity(), kGripperHome};
    if (state.tick >= script.max_ticks) {
        state.phase = Phase::kFailed;
        state.fail_reason = "timeout";
        return state;
    }
    state.current_keypoints = input.keypoints;

    switch (state.phase) {
        case Phase::kWaitObserve: {
            if (scene.object_mask.count() == 0) {
                state.phase = Phase::kFailed;
                state.fail_reason = "object not visible";
                break;
            }
            if (state.has_last) {
                const double change =
                    masked_rmse_change(*input.restored, state.last_restored, scene.object_mask);
                state.stable_count = change < kStableRmse ? state.stable_count + 1 : 0;
            }
            state.last_restored = *input.restored;
            state.has_last = true;
            if (state.stable_count < kStableFrames) break;

            Rng rng(derive_seed(script.seed, 0x6A5B + uint64_t(state.tick)));
            const std::vector<Grasp> grasps = sample_grasps_from_depth(
                *input.restored, scene.object_mask, scene.intrinsics, script.grasp_candidates,
                rng);
            CollisionWorld world;
            world.hand = hand_capsules(scene.keypoints);
            world.plane_point = {0, 0, script.scene.background.plane_depth};
            world.plane_normal = script.scene.background.plane_normal;
            world.boxes = script.scene.background.distractors;
            std::optional<GraspSelection> sel;
            if (!grasps.empty()) sel = select_grasp(grasps, world, script.v_r2h, script.v_u2d);
            if (!sel) {
                state.phase = Phase::kFailed;
                state.fail_reason = "no feasible grasp";
                break;
            }
            state.grasp = sel->grasp;
            state.pregrasp_initial = sel->pregrasp;
            state.pregrasp_current = sel->pregrasp;
            state.initial_keypoints = input.keypoints;
            state.phase = Phase::kApproachReact;
            break;
        }
        case Phase::kApproachReact: {
            const RigidMotion motion =
                estimate_hand_motion(state.initial_keypoints, input.keypoints);
            state.pregrasp_current = update_pregrasp(state.pregrasp_initial, motion,
                                                     state.initial_keypoints.wrist());
            move_toward(state.gripper, state.pregrasp_current, script.max_speed,
                        script.max_ang_speed);
            if (pose_reached(state.gripper, state.pregrasp_current))
                state.phase = Phase::kGraspRetrieve;
            break;
        }
        case Phase::kGraspRetrieve: {
            // Open loop: advance along the (frozen) grasp z toward the closure
            // point kPregraspBack + kGraspAdvance ahead of the pre-grasp.
            const Eigen::Vector3d z = state.pregrasp_current.R.col(2);
            const Eigen::Vector3d closure =
                state.pregrasp_current.p + (kPregraspBack + kGraspAdvance) * z;
            GripperPose target{state.pregrasp_current.R, closure};
            move_toward(state.gripper, target, script.max_speed, script.max_ang_speed);
            if ((state.gripper.p - closure).norm() > 1e-9) break;

            // Closure. The gripper pose is the fingertip plane; fingers span
            // kFingerDepth back along z. The closing axis must cross the true
            // object somewhere in that band, the object must fit between the
            // finger rails, and the rails must stay off the hand.
            const Grasp& g = *state.grasp;
            const Eigen::Vector3d axis = state.pregrasp_current.R.col(0);
            const double half = 0.5 * g.width;
            bool through_object = false;
            for (int ti = 0; ti <= 14 && !through_object; ++ti) {
                const Eigen::Vector3d c = closure - kFingerDepth * (double(ti) / 14.0) * z;
                for (int s = 0; s <= 32 && !through_object; ++s) {
                    const double x = -half + 2.0 * half * (double(s) / 32.0);
                    if (object_contains(script.scene.object, input.object_pose, c + x * axis))
                        through_object = true;
                }
            }
            bool rail_hit = false;     // object wider than the opened fingers
            bool hand_contact = false;
            for (int side = 0; side < 2 && !rail_hit; ++side) {
                const Eigen::Vector3d off = (side == 0 ? 1.0 : -1.0) * (half + 0.004) * axis;
                const Eigen::Vector3d r0 = closure + off - kFingerDepth * z;
                const Eigen::Vector3d r1 = closure + off;
                for (int s = 0; s <= 14 && !rail_hit; ++s)
                    if (object_contains(script.scene.object, input.object_pose,
                                        r0 + (r1 - r0) * (double(s) / 14.0)))
                        rail_hit = true;
                for (const Capsule& cap : hand_capsules(scene.keypoints))
                    if (segment_segment_distance(r0, r1, cap.a, cap.b) < cap.r)
                        hand_contact = true;
            }

            if (through_object && !rail_hit && !hand_contact) {
                state.phase = Phase::kDone;
            } else {
                state.phase = Phase::kFailed;
                state.fail_reason = hand_contact     ? "hand contact"
                                    : rail_hit       ? "finger collision"
                                                     : "missed object";
            }
            break;
        }
        default:
            break;
    }
    ++state.tick;
    return state;
}

// ---------------------------------------------------------------------------
// Scenario execution

RestorationBackend oracle_backend() {
    return [](const SceneRecord& s) {
        DepthImage out = s.depth_raw;
        for (int v = 0; v < out.height; ++v)
            for (int u = 0; u < out.width; ++u)
                if (s.object_mask.at(v, u)) out.at(v, u) = s.depth_gt.at(v, u);
        return out;
    };
}

RestorationBackend passthrough_backend() {
    return [](const SceneRecord& s) { return s.depth_raw; };
}

namespace {

RigidMotion motion_at_tick(const ScenarioScript& script, int tick) {
    RigidMotion m;
    for (const MotionKey& key : script.motion) {
        if (key.tick > tick) continue;
        m.R = key.angle == 0.0 ? Eigen::Matrix3d::Identity()
                               : Eigen::AngleAxisd(key.angle, key.axis.normalized())
                                     .toRotationMatrix();
        m.T = key.translation;
    }
    return m;
}

}  // namespace

ScenarioOutcome run_scenario(const ScenarioScript& script, const RestorationBackend& backend) {
    ScenarioOutcome out;
    out.name = script.name;
    out.kind = to_string(script.scene.object.kind);

    const HandKeypoints kp0 = synth_hand(script.scene.object, script.scene.object_pose,
                                         script.scene.grip);
    const Eigen::Vector3d wrist0 = kp0.wrist();

    HandoverState state;
    for (int tick = 0; tick <= script.max_ticks; ++tick) {
        const RigidMotion m = motion_at_tick(script, tick);
        SceneSpec spec = script.scene;
        spec.object_pose.R = m.R * script.scene.object_pose.R;
        spec.object_pose.t = m.R * (script.scene.object_pose.t - wrist0) + wrist0 + m.T;
        const SceneRecord scene = make_scene(spec);
        const DepthImage restored = backend(scene);

        TickInput input;
        input.script = &script;
        input.scene = &scene;
        input.restored = &restored;
        input.object_pose = spec.object_pose;
        input.keypoints = scene.keypoints;
        if (script.keypoint_noise_sigma > 0) {
            Rng noise(derive_seed(script.seed, 0xD07 + uint64_t(tick)));
            for (int i = 0; i < 21; ++i)
                for (int c = 0; c < 3; ++c)
                    input.keypoints.points(i, c) += noise.normal(0.0, script.keypoint_noise_sigma);
        }

        state = step(std::move(state), input);

        json t;
        t["tick"] = state.tick;
        t["phase"] = to_string(state.phase);
        t["gripper"] = {{"p", {state.gripper.p.x(), state.gripper.p.y(), state.gripper.p.z()}}};
        t["wrist"] = {input.keypoints.points(0, 0), input.keypoints.points(0, 1),
                      input.keypoints.points(0, 2)};
        if (state.grasp) {
            t["grasp"] = {{"p",
                           {state.pregrasp_current.p.x(), state.pregrasp_current.p.y(),
                            state.pregrasp_current.p.z()}},
                          {"width", state.grasp->width},
                          {"score", state.grasp->score}};
        }
        if (!state.fail_reason.empty()) t["fail_reason"] = state.fail_reason;
        out.trajectory.push_back(std::move(t));

        if (state.phase == Phase::kDone || state.phase == Phase::kFailed) break;
    }
    out.success = state.phase == Phase::kDone;
    out.fail_reason = state.fail_reason;
    if (state.phase != Phase::kDone && state.phase != Phase::kFailed)
        out.fail_reason = "timeout";
    out.ticks = state.tick;
    return out;
}

BenchmarkReport run_benchmark(const std::vector<ScenarioScript>& scenarios,
                              const RestorationBackend& backend) {
    if (scenarios.empty()) throw std::invalid_argument("run_benchmark: no scenarios");
    BenchmarkReport report;
    for (const ScenarioScript& s : scenarios) {
        ScenarioOutcome o = run_scenario(s, backend);
        auto it = std::find_if(report.per_object.begin(), report.per_object.end(),
                               [&](const BenchmarkRow& r) { return r.kind == o.kind; });
        if (it == report.per_object.end()) {
            report.per_object.push_back({o.kind, 0, 0});
            it = report.per_object.end() - 1;
        }
        ++it->attempts;
        ++report.attempts;
        if (o.success) {
            ++it->successes;
            ++report.successes;
        }
        report.outcomes.push_back(std::move(o));
    }
    report.success_rate = double(report.successes) / double(report.attempts);
    for (const BenchmarkRow& r : report.per_object) {
        const double rate = r.attempts ? double(r.successes) / double(r.attempts) : 0.0;
        if (rate >= 0.5) ++report.delta_05;
        if (rate >= 0.8) ++report.delta_08;
        if (rate >= 1.0) ++report.delta_10;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Shipped benchmark suite and scenario serialization

std::vector<ScenarioScript> make_benchmark_scenarios(uint64_t seed) {
    std::vector<ScenarioScript> out;
    const ObjectKind kinds[5] = {ObjectKind::kSphere, ObjectKind::kCylinder,
                                 ObjectKind::kCappedCone, ObjectKind::kBox,
                                 ObjectKind::kStemGlass};
    int moving = 0;
    for (int ki = 0; ki < 5; ++ki) {
        for (int grip = 0; grip < 6; ++grip) {
            Rng rng(derive_seed(seed, uint64_t(ki * 16 + grip)));
            ScenarioScript s;
            s.name = to_string(kinds[ki]) + "_grip" + std::to_string(grip);
            s.seed = derive_seed(seed, uint64_t(0x5C + ki * 8 + grip));

            SceneSpec& spec = s.scene;
            spec.seed = s.seed;
            spec.intrinsics = default_intrinsics(64, 64);
            spec.object.kind = kinds[ki];
            switch (kinds[ki]) {
                case ObjectKind::kSphere: spec.object.radius = 0.035; break;
                case ObjectKind::kCylinder:
                    spec.object.radius = 0.03;
                    spec.object.half_height = 0.09;
                    break;
                case ObjectKind::kCappedCone:
                    spec.object.radius = 0.04;
                    spec.object.radius2 = 0.022;
                    spec.object.half_height = 0.07;
                    break;
                case ObjectKind::kBox:
                    spec.object.half_extents = {0.028, 0.028, 0.07};
                    break;
                case ObjectKind::kStemGlass:
                    spec.object.radius = 0.035;
                    spec.object.radius2 = 0.01;
                    spec.object.half_height = 0.09;
                    break;
            }
            // Mild tilt so the axis is never exactly camera-aligned.
            spec.object_pose.R =
                (Eigen::AngleAxisd(0.35 + 0.12 * grip, Eigen::Vector3d::UnitX()) *
                 Eigen::AngleAxisd(rng.uniform(-0.4, 0.4), Eigen::Vector3d::UnitY()))
                    .toRotationMatrix();
            spec.object_pose.t = {rng.uniform(-0.04, 0.04), rng.uniform(-0.03, 0.03),
                                  rng.uniform(0.6, 0.8)};
            spec.grip.angle = grip * (2.0 * M_PI / 6.0) + 0.25;
            spec.grip.spread = 0.28;
            spec.grip.wrist_offset = 0.04;
            spec.grip.height = rng.uniform(-0.015, 0.015);
            spec.background.plane_depth = 2.0;
            spec.background.distractors.clear();

            // Two scripts carry a mid-approach rigid hand motion.
            if ((ki == 1 && grip == 2) || (ki == 3 && grip == 4)) {
                MotionKey key;
                key.tick = 8;
                key.translation = moving == 0 ? Eigen::Vector3d(0.05, 0.0, 0.0)
                                              : Eigen::Vector3d(0.0, -0.04, 0.02);
                key.axis = {0, 1, 0};
                key.angle = moving == 0 ? 0.0 : 0.15;
                s.motion.push_back(key);
                ++moving;
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

json scenario_to_json(const ScenarioScript& s) {
    json j;
    j["name"] = s.name;
    const SceneSpec& sp = s.scene;
    j["object"] = {{"kind", to_string(sp.object.kind)},
                   {"radius", sp.object.radius},
                   {"radius2", sp.object.radius2},
                   {"half_height", sp.object.half_height},
                   {"half_extents",
                    {sp.object.half_extents.x(), sp.object.half_extents.y(),
                     sp.object.half_extents.z()}}};
    const Eigen::AngleAxisd aa(sp.object_pose.R);
    j["object_pose"] = {{"axis", {aa.axis().x(), aa.axis().y(), aa.axis().z()}},
                        {"angle", aa.angle()},
                        {"translation",
                         {sp.object_pose.t.x(), sp.object_pose.t.y(), sp.object_pose.t.z()}}};
    j["grip"] = {{"angle", sp.grip.angle},
                 {"spread", sp.grip.spread},
                 {"wrist_offset", sp.grip.wrist_offset},
                 {"height", sp.grip.height}};
    j["background"] = {{"plane_depth", sp.background.plane_depth},
                       {"plane_normal",
                        {sp.background.plane_normal.x(), sp.background.plane_normal.y(),
                         sp.background.plane_normal.z()}}};
    j["corruption"] = {{"p_missing", sp.corruption.p_missing},
                       {"p_background", sp.corruption.p_background},
                       {"p_noise", sp.corruption.p_noise},
                       {"sigma", sp.corruption.sigma}};
    j["intrinsics"] = {{"width", sp.intrinsics.width},
                       {"height", sp.intrinsics.height},
                       {"fx", sp.intrinsics.fx},
                       {"fy", sp.intrinsics.fy},
                       {"cx", sp.intrinsics.cx},
                       {"cy", sp.intrinsics.cy}};
    j["seed"] = sp.seed;
    j["scenario_seed"] = s.seed;
    j["v_r2h"] = {s.v_r2h.x(), s.v_r2h.y(), s.v_r2h.z()};
    j["v_u2d"] = {s.v_u2d.x(), s.v_u2d.y(), s.v_u2d.z()};
    j["max_ticks"] = s.max_ticks;
    j["max_speed"] = s.max_speed;
    j["max_ang_speed"] = s.max_ang_speed;
    j["keypoint_noise_sigma"] = s.keypoint_noise_sigma;
    j["grasp_candidates"] = s.grasp_candidates;
    json motion = json::array();
    for (const MotionKey& k : s.motion)
        motion.push_back({{"tick", k.tick},
                          {"axis", {k.axis.x(), k.axis.y(), k.axis.z()}},
                          {"angle", k.angle},
                          {"translation",
                           {k.translation.x(), k.translation.y(), k.translation.z()}}});
    j["motion"] = motion;
    return j;
}

namespace {

Eigen::Vector3d vec3(const json& j) { return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()}; }

}  // namespace

ScenarioScript scenario_from_json(const json& j) {
    ScenarioScript s;
    s.name = j.at("name").get<std::string>();
    SceneSpec& sp = s.scene;
    const json& obj = j.at("object");
    sp.object.kind = object_kind_from_string(obj.at("kind").get<std::string>());
    sp.object.radius = obj.at("radius").get<double>();
    sp.object.radius2 = obj.at("radius2").get<double>();
    sp.object.half_height = obj.at("half_height").get<double>();
    sp.object.half_extents = vec3(obj.at("half_extents"));
    const json& pose = j.at("object_pose");
    sp.object_pose.R =
        Eigen::AngleAxisd(pose.at("angle").get<double>(), vec3(pose.at("axis")).normalized())
            .toRotationMatrix();
    sp.object_pose.t = vec3(pose.at("translation"));
    const json& grip = j.at("grip");
    sp.grip.angle = grip.at("angle").get<double>();
    sp.grip.spread = grip.at("spread").get<double>();
    sp.grip.wrist_offset = grip.at("wrist_offset").get<double>();
    sp.grip.height = grip.at("height").get<double>();
    const json& bg = j.at("background");
    sp.background.plane_depth = bg.at("plane_depth").get<double>();
    sp.background.plane_normal = vec3(bg.at("plane_normal")).normalized();
    sp.background.distractors.clear();
    const json& cor = j.at("corruption");
    sp.corruption.p_missing = cor.at("p_missing").get<double>();
    sp.corruption.p_background = cor.at("p_background").get<double>();
    sp.corruption.p_noise = cor.at("p_noise").get<double>();
    sp.corruption.sigma = cor.at("sigma").get<double>();
    const json& intr = j.at("intrinsics");
    sp.intrinsics.width = intr.at("width").get<int>();
    sp.intrinsics.height = intr.at("height").get<int>();
    sp.intrinsics.fx = intr.at("fx").get<double>();
    sp.intrinsics.fy = intr.at("fy").get<double>();
    sp.intrinsics.cx = intr.at("cx").get<double>();
    sp.intrinsics.cy = intr.at("cy").get<double>();
    sp.seed = j.at("seed").get<uint64_t>();
    s.seed = j.at("scenario_seed").get<uint64_t>();
    s.v_r2h = vec3(j.at("v_r2h"));
    s.v_u2d = vec3(j.at("v_u2d"));
    s.max_ticks = j.at("max_ticks").get<int>();
    s.max_speed = j.at("max_speed").get<double>();
    s.max_ang_speed = j.at("max_ang_speed").get<double>();
    s.keypoint_noise_sigma = j.at("keypoint_noise_sigma").get<double>();
    s.grasp_candidates = j.at("grasp_candidates").get<int>();
    for (const json& k : j.at("motion")) {
        MotionKey key;
        key.tick = k.at("tick").get<int>();
        key.axis = vec3(k.at("axis"));
        key.angle = k.at("angle").get<double>();
        key.translation = vec3(k.at("translation"));
        s.motion.push_back(key);
    }
    return s;
}

std::string benchmark_table(const BenchmarkReport& r) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-14s %10s %12s\n", "Object", "Attempts", "Successes");
    out += buf;
    for (const BenchmarkRow& row : r.per_object) {
        std::snprintf(buf, sizeof(buf), "%-14s %10d %12d\n", row.kind.c_str(), row.attempts,
                      row.successes);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "overall: %d/%d (%.1f%%)  delta_0.5: %d/%zu  delta_0.8: %d/%zu  delta_1.0: "
                  "%d/%zu\n",
                  r.successes, r.attempts, 100.0 * r.success_rate, r.delta_05,
                  r.per_object.size(), r.delta_08, r.per_object.size(), r.delta_10,
                  r.per_object.size());
    out += buf;
    return out;
}

json benchmark_to_json(const BenchmarkReport& r) {
    json j;
    j["attempts"] = r.attempts;
    j["successes"] = r.successes;
    j["success_rate"] = r.success_rate;
    j["delta_05"] = r.delta_05;
    j["delta_08"] = r.delta_08;
    j["delta_10"] = r.delta_10;
    json rows = json::array();
    for (const BenchmarkRow& row : r.per_object)
        rows.push_back({{"kind", row.kind}, {"attempts", row.attempts},
                        {"successes", row.successes}});
    j["per_object"] = rows;
    json outcomes = json::array();
    for (const ScenarioOutcome& o : r.outcomes)
        outcomes.push_back({{"name", o.name},
                            {"kind", o.kind},
                            {"success", o.success},
                            {"ticks", o.ticks},
                            {"fail_reason", o.fail_reason}});
    j["scenarios"] = outcomes;
    return j;
}

}  // namespace rvdr
