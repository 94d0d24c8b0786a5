#pragma once

#include <Eigen/Core>
#include <array>
#include <vector>

#include "rvdr/geometry.hpp"
#include "rvdr/nn.hpp"

namespace rvdr {

namespace dims {
constexpr int kImageChannels = 32;  // C_rgb
constexpr int kPyramidBase = 16;    // level i has kPyramidBase*i channels
constexpr int kRayFeature = 128;    // 2*2*C_rgb
constexpr int kPointGeom = 16;
constexpr int kPointColor = 16;
constexpr int kPointFused = kPointGeom + kPointColor;
constexpr int kVoxelFeature = 64;
constexpr int kHandAbs = 63;
constexpr int kHandRel = 63;
constexpr int kHandFeature = kHandAbs + kHandRel;
constexpr int kPeOctaves = 5;
constexpr int kPosEmbed = 2 * 3 * kPeOctaves;
constexpr int kPairEmbedding = kRayFeature + kVoxelFeature + kHandFeature + 2 * kPosEmbed;
}  // namespace dims

// Channels-by-pixels matrix; pixel index = y*width + x.
struct FeatureMap {
    int height = 0, width = 0;
    Eigen::MatrixXd m;  // channels x (height*width)

    FeatureMap() = default;
    FeatureMap(int c, int h, int w) : height(h), width(w), m(Eigen::MatrixXd::Zero(c, h * w)) {}
    int channels() const { return int(m.rows()); }
    int pixel(int v, int u) const { return v * width + u; }
};

// 21 keypoints, camera frame, meters. Wrist first, then thumb/index/middle/
// ring/pinky chains of four joints each (base to tip).
struct HandKeypoints {
    Eigen::Matrix<double, 21, 3> points = Eigen::Matrix<double, 21, 3>::Zero();

    static constexpr int kWrist = 0;
    static constexpr int kThumbBase = 1;
    static constexpr int kIndexMcp = 5;
    static constexpr int kMiddleMcp = 9;
    static constexpr int kRingMcp = 13;
    static constexpr int kPinkyMcp = 17;

    Eigen::Vector3d wrist() const { return points.row(kWrist); }
    void validate() const;  // finite, pairwise span < 0.5 m
};

// Bone segments used for capsule rendering and collision (20 pairs).
const std::array<std::pair<int, int>, 20>& hand_bones();

struct PairEmbedding {
    Eigen::VectorXd f_ray;        // 128
    Eigen::VectorXd f_voxel;      // 64
    Eigen::VectorXd f_hand;       // 126 = abs(63) + rel(63)
    Eigen::VectorXd gamma_ray;    // 30
    Eigen::VectorXd gamma_voxel;  // 30
};

// Fixed-order concatenation; throws on component length mismatch.
Eigen::VectorXd assemble(const PairEmbedding& e);

// NeRF-style embedding: per component c, octave k: (sin(2^k pi c), cos(2^k pi c)).
Eigen::VectorXd positional_embedding(const Eigen::Vector3d& x, int octaves = dims::kPeOctaves);

// Keypoints in the canonical wrist frame (x toward middle MCP, y toward the
// index MCP component orthogonal to x), flattened. Rigid-motion invariant.
Eigen::VectorXd hand_abs_feature(const HandKeypoints& kp);

// (keypoint - voxel_center) flattened, camera frame.
Eigen::VectorXd hand_rel_feature(const HandKeypoints& kp, const Eigen::Vector3d& voxel_center);

// ---------------------------------------------------------------------------
// Learnable feature extractors. Each forward can record a cache; backward
// accumulates parameter gradients and returns/propagates input gradients.

// Compact conv pyramid: strides 4/8/16/32 with 16/32/48/64 channels, levels
// resampled to H/4 x W/4, concatenated, reduced to 32 channels by a 1x1 map,
// then bilinearly resized to H x W.
struct ImageEncoder {
    Conv2d stem1, stem2, down2, down3, down4, reduce;

    void init(Rng& rng);
    void zero_grad();

    struct Cache {
        int h = 0, w = 0;
        std::vector<Eigen::MatrixXd> patches;  // per conv stage, im2col inputs
        std::vector<Eigen::MatrixXd> pre;      // per conv stage, pre-activation
        std::vector<int> stage_h, stage_w;
        Eigen::MatrixXd concat;                // 160 x (h/4*w/4), post multiscale gate
        Eigen::MatrixXd reduced;               // 32 x (h/4*w/4)
        bool multiscale = true;
    };

    // rgb: 3 x (h*w), values in [0,1]; requires h, w divisible by 16.
    FeatureMap forward(const FeatureMap& rgb, bool multiscale = true, Cache* cache = nullptr) const;
    void backward(const Cache& cache, const FeatureMap& d_out);
};

// 8x8 window centered at the pixel (edge-clamped), average-pooled to 2x2 and
// flattened cell-major: [cell(0,0) | cell(0,1) | cell(1,0) | cell(1,1)].
Eigen::VectorXd roi_ray_feature(const FeatureMap& m, int u, int v);
void roi_ray_feature_backward(FeatureMap& d_map, int u, int v, const Eigen::VectorXd& d_feat);

// Early point fusion: geometry embedding of (point - voxel center)/cell_size
// and color embedding of the dense feature at the point's source pixel.
struct PointFusion {
    Linear xyz;  // 16 x 3
    Linear rgb;  // 16 x 32

    void init(Rng& rng);
    void zero_grad();

    struct Cache {
        Eigen::MatrixXd x_rel;   // 3 x N
        Eigen::MatrixXd f_rgb;   // 32 x N (gathered dense features)
        std::vector<int> pixel;  // source pixel index per point
        bool fuse_color = true;
    };

    // Returns 32 x N fused features; throws if a point lies outside the grid.
    Eigen::MatrixXd forward(const PointCloud& cloud, const VoxelGrid& grid,
                            const FeatureMap& dense, bool fuse_color = true,
                            Cache* cache = nullptr) const;
    // d_dense accumulates the gradient w.r.t. the dense map (may be null).
    void backward(const Cache& cache, const Eigen::MatrixXd& d_fused, FeatureMap* d_dense);
};

// Two max-pool stages over a voxel's fused point features:
// fc1(32->32) -> max -> concat back per point (64) -> fc2(64->64) -> max.
struct VoxelEncoder {
    Linear fc1;  // 32 x 32
    Linear fc2;  // 64 x 64

    void init(Rng& rng);
    void zero_grad();

    struct VoxelCache {
        std::vector<int> point_cols;  // columns of the fused matrix
        Eigen::MatrixXd x;            // 32 x n gathered input
        Eigen::MatrixXd h1;           // 32 x n
        Eigen::MatrixXd g;            // 64 x n
        std::array<int, 32> argmax1;
        std::array<int, 64> argmax2;
    };

    // Encodes one voxel given the fused feature columns of its points.
    Eigen::VectorXd forward(const Eigen::MatrixXd& fused, const std::vector<int>& point_cols,
                            VoxelCache* cache = nullptr) const;
    // Routes gradients to the attaining points (first index on ties).
    void backward(const VoxelCache& cache, const Eigen::VectorXd& d_voxel,
                  Eigen::MatrixXd& d_fused);
};

}  // namespace rvdr
