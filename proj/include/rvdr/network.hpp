#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "rvdr/features.hpp"
#include "rvdr/scene.hpp"

namespace rvdr {

enum class HandFeatureMode { kOff, k2D, k3D };

HandFeatureMode hand_feature_mode_from_string(const std::string& s);
std::string to_string(HandFeatureMode m);

// Ablation switches and structural knobs. Parameter shapes are identical
// across switch settings so ablations share seeds and checkpoints.
struct ModelConfig {
    int voxel_resolution = 8;
    HandFeatureMode hand_feature = HandFeatureMode::k3D;
    bool point_fusion = true;
    bool multiscale = true;
};

// Decoder output for one ray-voxel pair.
struct PairPrediction {
    double logit = 0;   // termination evidence
    double sigma = 0;   // logistic(offset head), in (0,1)
    double delta = 0;   // sigma * (t_out - t_in), meters
};

// All learnable parameters. Blocks are visited in a fixed order for the flat
// view, the optimizer, and the checkpoint container.
struct Model {
    ModelConfig config;
    ImageEncoder encoder;
    PointFusion fusion;
    VoxelEncoder voxels;
    Mlp offset_mlp;  // 378 -> 256 -> 128 -> 1, logistic head applied by caller
    Mlp prob_mlp;    // 378 -> 256 -> 128 -> 1, identity head

    static Model init(const ModelConfig& cfg, uint64_t seed);

    // Raw view of one named parameter block (weight matrix or bias vector).
    struct ParamView {
        std::string name;
        Eigen::Index rows = 0, cols = 0;  // cols == 1 for biases
        double* values = nullptr;
        double* grads = nullptr;
        Eigen::Index size() const { return rows * cols; }
    };

    // Fixed visiting order; the flat view, optimizer state, and checkpoint
    // layout all follow it.
    std::vector<ParamView> param_views();
    std::vector<std::string> block_names();

    size_t parameter_count();
    Eigen::VectorXd flat_parameters();
    void set_flat_parameters(const Eigen::VectorXd& theta);
    Eigen::VectorXd flat_gradients();
    void zero_grad();
    bool gradients_finite();
};

PairPrediction predict_pair(Model& model, const Eigen::VectorXd& embedding, double span);

// Everything one scene contributes to a forward/backward pass. Pairs are laid
// out ray-major (CSR) in traversal order.
struct ScenePass {
    // geometry
    PointCloud cloud;
    VoxelGrid grid;
    std::vector<Ray> rays;                        // one per restore-mask pixel
    std::vector<std::vector<RayVoxelPair>> trav;  // per ray, occupied crossings
    std::vector<int> pair_begin;                  // CSR offsets, size rays+1
    std::vector<RayVoxelPair> pairs;              // flattened
    std::vector<int> pair_voxel_compact;          // pair -> compact voxel id
    std::vector<int> voxel_cells;                 // compact voxel id -> grid cell

    // forward results
    Eigen::VectorXd logits;  // per pair
    Eigen::VectorXd sigmas;  // per pair
    Eigen::VectorXd deltas;  // per pair, meters
    std::vector<int> selected;  // per ray: argmax pair index (global), -1 if none
    DepthImage restored;        // restore-mask pixels composed, others copied from input

    // caches for the reverse pass (populated when requested)
    struct Tapes;
    std::shared_ptr<Tapes> tapes;
};

// Runs geometry + features + decoders over the restore mask. When
// `with_tapes` is set the pass retains what the reverse pass needs.
ScenePass scene_forward(Model& model, const SceneRecord& scene, const Mask& restore_mask,
                        bool with_tapes);

// Accumulates parameter gradients from per-pair adjoints (dL/d delta and
// dL/d logit, meters / logits).
void scene_backward(Model& model, ScenePass& pass, const Eigen::VectorXd& d_delta,
                    const Eigen::VectorXd& d_logit);

// Full pipeline: restores depth on the mask, copies input depth elsewhere.
DepthImage restore(Model& model, const SceneRecord& scene, const Mask& restore_mask);

}  // namespace rvdr
