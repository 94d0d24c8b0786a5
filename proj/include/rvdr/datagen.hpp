#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rvdr/random.hpp"
#include "rvdr/scene.hpp"

namespace rvdr {

enum class ObjectKind { kSphere, kCylinder, kCappedCone, kBox, kStemGlass };

ObjectKind object_kind_from_string(const std::string& s);
std::string to_string(ObjectKind k);

// Canonical frame: axis = +z, centered at the origin.
struct ObjectShape {
    ObjectKind kind = ObjectKind::kSphere;
    double radius = 0.03;      // sphere R; cylinder r; cone bottom r; glass bowl top r
    double radius2 = 0.0;      // cone top r; glass stem r
    double half_height = 0.0;  // cylinder / cone / glass half height
    Eigen::Vector3d half_extents{0.03, 0.03, 0.06};  // box only
};

struct Pose {
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();

    Eigen::Vector3d to_world(const Eigen::Vector3d& p_local) const { return R * p_local + t; }
    Eigen::Vector3d to_local(const Eigen::Vector3d& p_world) const {
        return R.transpose() * (p_world - t);
    }
};

struct GripParams {
    double angle = 0.0;         // rotation about the object axis (rad)
    double spread = 0.28;       // angular gap between adjacent finger contacts (rad)
    double wrist_offset = 0.04; // wrist clearance beyond the surface (m)
    double height = 0.0;        // grip height along the axis (m, canonical frame)
};

struct CorruptionParams {
    double p_missing = 0.35;
    double p_background = 0.35;
    double p_noise = 0.15;
    double sigma = 0.01;  // meters

    void validate() const;  // probabilities in range, sum <= 1
};

struct BackgroundSpec {
    double plane_depth = 2.0;                      // m at the optical axis
    Eigen::Vector3d plane_normal{0, 0, -1};        // unit, toward the camera
    Eigen::Vector3d plane_color_a{0.55, 0.5, 0.4};
    Eigen::Vector3d plane_color_b{0.35, 0.32, 0.3};
    double checker = 0.08;  // m

    struct Box {
        Eigen::Vector3d lo, hi;  // world AABB
        Eigen::Vector3d color;
    };
    std::vector<Box> distractors;
};

struct SceneSpec {
    ObjectShape object;
    Pose object_pose;
    Eigen::Vector3d object_color{0.7, 0.8, 0.9};
    bool with_hand = true;
    GripParams grip;
    Eigen::Vector3d hand_color{0.75, 0.55, 0.45};
    BackgroundSpec background;
    CameraIntrinsics intrinsics;
    CorruptionParams corruption;
    bool rgb_augmentation = false;
    uint64_t seed = 0;
};

struct RenderResult {
    DepthImage depth;            // perfect
    DepthImage depth_no_object;  // scene with the object removed
    Mask object_mask, hand_mask;
    RgbImage rgb;
};

struct Capsule {
    Eigen::Vector3d a, b;
    double r = 0.009;
};

constexpr double kHandCapsuleRadius = 0.009;

std::vector<Capsule> hand_capsules(const HandKeypoints& kp, double radius = kHandCapsuleRadius);

// Deterministic parametric grasp: fingertip and distal joints projected onto
// the object surface around a grip circle, proximal joints interpolated from
// the wrist. Equivariant under the object pose.
HandKeypoints synth_hand(const ObjectShape& shape, const Pose& pose, const GripParams& grip);

// Analytic nearest-hit render; per-entity masks; flat Lambertian shading.
RenderResult render_perfect(const SceneSpec& spec);

// Per object-mask pixel: missing, see-through-to-background, or noise, each
// drawn independently from the seeded stream; other pixels untouched.
DepthImage corrupt_depth(const DepthImage& perfect, const DepthImage& background,
                         const Mask& object_mask, const CorruptionParams& params, uint64_t seed);

SceneRecord make_scene(const SceneSpec& spec);

// Membership and ray queries used by the handover collision world.
bool object_contains(const ObjectShape& shape, const Pose& pose, const Eigen::Vector3d& p);
std::optional<double> object_ray_hit(const ObjectShape& shape, const Pose& pose,
                                     const Eigen::Vector3d& origin, const Eigen::Vector3d& dir);

struct DatasetParams {
    int n_scenes = 500;
    int width = 64, height = 64;
    double focal_scale = 0.9;  // fx = fy = focal_scale * width
    std::vector<std::pair<ObjectKind, double>> kind_distribution = {
        {ObjectKind::kSphere, 0.2},     {ObjectKind::kCylinder, 0.2},
        {ObjectKind::kCappedCone, 0.2}, {ObjectKind::kBox, 0.2},
        {ObjectKind::kStemGlass, 0.2},
    };
    std::vector<ObjectKind> unknown_kinds = {ObjectKind::kCappedCone, ObjectKind::kStemGlass};
    CorruptionParams corruption;
    bool rgb_augmentation = false;
    uint64_t seed = 1;
};

CameraIntrinsics default_intrinsics(int width, int height, double focal_scale = 0.9);

ObjectKind sample_kind(const std::vector<std::pair<ObjectKind, double>>& dist, Rng& rng);

// Scene sampled entirely from the per-scene seed; repeated calls agree.
SceneSpec sample_scene_spec(const DatasetParams& params, uint64_t scene_seed);

struct GeneratedScene {
    std::string id;
    ObjectKind kind;
    uint64_t seed;
    int split;  // 0 train, 1 val, 2 test
    bool unknown_category;
    double supervised_fraction;
};

// Writes scenes/NNNNNN/... plus manifest.json under out_dir; split 7:2:1 by
// index. Returns the manifest rows.
std::vector<GeneratedScene> generate_dataset(const DatasetParams& params,
                                             const std::string& out_dir,
                                             const std::string& config_hash, int threads = 1);

}  // namespace rvdr
