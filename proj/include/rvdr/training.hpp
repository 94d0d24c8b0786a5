#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "rvdr/network.hpp"
#include "rvdr/scene.hpp"

namespace rvdr {

struct LossWeights {
    double depth = 200.0;
    double prob = 10.0;
    double norm = 0.5;
};

struct RayTarget {
    bool supervised = false;
    int pair_local = -1;     // index within the ray's pair list
    double true_depth = 0;   // meters
    double true_offset = 0;  // meters from the containing voxel's entry
};

struct SceneTargets {
    std::vector<RayTarget> rays;  // parallel to ScenePass::rays
    int supervised = 0;
    int excluded = 0;
};

// A restore-mask ray is supervised iff its ground-truth surface point falls
// inside one of the occupied voxels it traverses; otherwise it is excluded
// from every loss term.
SceneTargets build_targets(const SceneRecord& scene, const ScenePass& pass);

// Fraction of object-mask rays that are supervised (geometry only, no model).
double supervised_ray_fraction(const SceneRecord& scene, int voxel_resolution = 8);

double loss_depth(const std::vector<double>& pred, const std::vector<double>& truth);

// Mean softmax cross-entropy per supervised ray; logits per ray, target index
// into that ray's list.
double loss_prob(const std::vector<std::vector<double>>& logits_per_ray,
                 const std::vector<int>& target_index);

struct NormalMap {
    int height = 0, width = 0;
    Eigen::MatrixXd n;  // 3 x h*w, unit where valid
    Mask valid;
};

// Central-difference normals from back-projected 4-neighborhoods, oriented
// toward the camera. Valid only where the pixel and its 4 neighbors are in
// the mask with positive depth.
NormalMap normals_from_depth(const DepthImage& d, const CameraIntrinsics& k, const Mask& mask);

// Accumulates dL/d(depth) given dL/d(normal) on valid pixels.
void normals_from_depth_backward(const DepthImage& d, const CameraIntrinsics& k,
                                 const NormalMap& nm, const Eigen::MatrixXd& d_n,
                                 DepthImage& d_depth);

// Mean of (1 - n_pred . n_true) over jointly valid pixels.
double loss_norm(const NormalMap& pred, const NormalMap& truth);

struct LossBreakdown {
    double total = 0, depth = 0, prob = 0, norm = 0;
    int supervised = 0, excluded = 0, norm_pixels = 0;
};

// Eq-style weighted sum over one scene; accumulates parameter gradients when
// with_grad is set (caller owns zero_grad).
LossBreakdown total_loss(Model& model, const SceneRecord& scene, const LossWeights& w,
                         bool with_grad);

struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;
    Eigen::VectorXd m, v;

    static AdamState init(size_t n);
};

// Bias-corrected Adam over the flat parameter view; throws DivergenceError on
// non-finite gradients.
void adam_step(AdamState& state, Model& model, double lr);

// Base lr for the first `late_start` fraction of epochs, then scaled.
double lr_at_epoch(int epoch, int total_epochs, double base_lr, double late_factor = 0.1,
                   double late_start = 0.8);

struct TrainScene {
    const SceneRecord* scene;
    bool unknown_category = false;
};

struct TrainConfig {
    int epochs = 100;
    double lr = 1e-3;
    double lr_late_factor = 0.1;
    double lr_late_start = 0.8;
    LossWeights weights;
    uint64_t seed = 7;
    int threads = 1;
};

struct ValMetrics {
    double rmse = 0, rel = 0, mae = 0;
    double delta_105 = 0, delta_110 = 0, delta_125 = 0;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0;
    double loss_total = 0, loss_depth = 0, loss_prob = 0, loss_norm = 0;
    long excluded_rays = 0;
    std::optional<ValMetrics> val;
};

struct TrainResult {
    Model model;        // best-validation parameters (initialization if no epochs ran)
    bool diverged = false;
    std::vector<EpochLog> log;
    double best_val_rmse = 0;
};

// Deterministic given (model seed, config): per-epoch shuffles come from the
// config seed, one optimizer step per scene.
TrainResult train(Model model, const std::vector<TrainScene>& train_scenes,
                  const std::vector<const SceneRecord*>& val_scenes, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace rvdr
