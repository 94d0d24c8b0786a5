#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rvdr/datagen.hpp"
#include "rvdr/scene.hpp"

namespace rvdr {

// 6-DoF parallel gripper pose: x = closing axis, z = approach.
struct Grasp {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    double width = 0.05;  // meters, in (0, 0.1]
    double score = 0.0;   // s in [0, 1]

    void validate() const;  // proper rotation, width range
};

constexpr double kMaxGraspWidth = 0.1;
constexpr double kPregraspBack = 0.10;    // m back along grasp z
constexpr double kGraspAdvance = 0.05;    // m forward along grasp z at closure

enum class Phase { kWaitObserve, kApproachReact, kGraspRetrieve, kDone, kFailed };
std::string to_string(Phase p);

struct GripperPose {
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
};

// Rigid hand-motion keyframe: transform applied to the initial configuration
// from this tick on (rotation about the initial wrist).
struct MotionKey {
    int tick = 0;
    Eigen::Vector3d axis{0, 0, 1};
    double angle = 0.0;
    Eigen::Vector3d translation{0, 0, 0};
};

struct ScenarioScript {
    std::string name;
    SceneSpec scene;  // initial configuration
    std::vector<MotionKey> motion;
    Eigen::Vector3d v_r2h{0, 0, 1};  // robot-to-human unit vector
    Eigen::Vector3d v_u2d{0, 1, 0};  // up-to-down unit vector (camera +y)
    int max_ticks = 80;
    double max_speed = 0.05;      // m/tick
    double max_ang_speed = 0.5;   // rad/tick
    double keypoint_noise_sigma = 0.0;
    int grasp_candidates = 48;
    uint64_t seed = 11;
};

nlohmann::json scenario_to_json(const ScenarioScript& s);
ScenarioScript scenario_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Grasp generation and selection

// Antipodal sampling over an oriented point cloud: near-opposite normals,
// separation below the gripper width; score favors strong antipodality and
// narrow grasps. Two approach candidates (+/-) are emitted per accepted pair.
std::vector<Grasp> sample_grasps(const std::vector<Eigen::Vector3d>& points,
                                 const std::vector<Eigen::Vector3d>& normals, int n, Rng& rng);

// Convenience wrapper: masked restored depth -> points + estimated normals
// (depth-edge pixels rejected), then the sampler above.
std::vector<Grasp> sample_grasps_from_depth(const DepthImage& restored, const Mask& object_mask,
                                            const CameraIntrinsics& k, int n, Rng& rng);

// C = w_s*s + w_r2h * v_r2h^T (R v_r2h) + w_u2d * v_u2d^T (R v_u2d).
double rescore(const Grasp& g, const Eigen::Vector3d& v_r2h, const Eigen::Vector3d& v_u2d,
               double w_s = 1.0, double w_r2h = 0.4, double w_u2d = 0.2);

struct CollisionWorld {
    std::vector<Capsule> hand;
    Eigen::Vector3d plane_point{0, 0, 2};
    Eigen::Vector3d plane_normal{0, 0, -1};
    std::vector<BackgroundSpec::Box> boxes;
};

// Swept-sphere segment clearance against the world (true = no contact).
bool segment_clear(const CollisionWorld& world, const Eigen::Vector3d& a,
                   const Eigen::Vector3d& b, double radius);

struct GraspSelection {
    Grasp grasp;
    GripperPose pregrasp;  // grasp retracted kPregraspBack along its z
    double combined_score = 0;
};

// Collision-filter, rescore, argmax (ties: higher s, then lower index).
std::optional<GraspSelection> select_grasp(const std::vector<Grasp>& grasps,
                                           const CollisionWorld& world,
                                           const Eigen::Vector3d& v_r2h,
                                           const Eigen::Vector3d& v_u2d);

// ---------------------------------------------------------------------------
// Closed-loop hand tracking

struct RigidMotion {
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d T = Eigen::Vector3d::Zero();
};

// Kabsch on wrist-centered keypoints; T is the wrist displacement. The SVD
// sign flip keeps the rotation proper for reflective correspondences.
RigidMotion estimate_hand_motion(const HandKeypoints& initial, const HandKeypoints& current);

// Rotates about the initial wrist and translates; orientation composes R in.
GripperPose update_pregrasp(const GripperPose& initial, const RigidMotion& motion,
                            const Eigen::Vector3d& initial_wrist);

// ---------------------------------------------------------------------------
// State machine

struct HandoverState {
    Phase phase = Phase::kWaitObserve;
    GripperPose gripper;
    std::optional<Grasp> grasp;
    GripperPose pregrasp_initial, pregrasp_current;
    HandKeypoints initial_keypoints, current_keypoints;
    int tick = 0;
    std::string fail_reason;

    // WaitObserve stability tracking
    int stable_count = 0;
    DepthImage last_restored;
    bool has_last = false;
};

// One observation tick: the rendered scene, the backend's restored depth, the
// detected keypoints, and the ground-truth object pose for the success check.
struct TickInput {
    const ScenarioScript* script = nullptr;
    const SceneRecord* scene = nullptr;
    const DepthImage* restored = nullptr;
    HandKeypoints keypoints;
    Pose object_pose;  // ground truth at this tick
};

HandoverState step(HandoverState state, const TickInput& input);

// ---------------------------------------------------------------------------
// Scenario execution

using RestorationBackend = std::function<DepthImage(const SceneRecord&)>;

RestorationBackend oracle_backend();
RestorationBackend passthrough_backend();

struct ScenarioOutcome {
    std::string name;
    std::string kind;
    bool success = false;
    std::string fail_reason;
    int ticks = 0;
    std::vector<nlohmann::json> trajectory;  // one entry per tick
};

ScenarioOutcome run_scenario(const ScenarioScript& script, const RestorationBackend& backend);

struct BenchmarkRow {
    std::string kind;
    int attempts = 0;
    int successes = 0;
};

struct BenchmarkReport {
    std::vector<BenchmarkRow> per_object;
    int attempts = 0, successes = 0;
    double success_rate = 0;                 // fraction
    int delta_05 = 0, delta_08 = 0, delta_10 = 0;  // object counts over thresholds
    std::vector<ScenarioOutcome> outcomes;
};

BenchmarkReport run_benchmark(const std::vector<ScenarioScript>& scenarios,
                              const RestorationBackend& backend);

// The shipped benchmark suite: 5 object families x 6 grips; two scenarios
// carry a mid-approach rigid hand motion.
std::vector<ScenarioScript> make_benchmark_scenarios(uint64_t seed);

std::string benchmark_table(const BenchmarkReport& r);
nlohmann::json benchmark_to_json(const BenchmarkReport& r);

}  // namespace rvdr
