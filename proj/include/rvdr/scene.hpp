#pragma once

#include <string>
#include <vector>

#include "rvdr/features.hpp"
#include "rvdr/geometry.hpp"

namespace rvdr {

// RGB image in [0,1], same layout as FeatureMap (3 x h*w).
struct RgbImage {
    int height = 0, width = 0;
    Eigen::MatrixXd m;

    RgbImage() = default;
    RgbImage(int h, int w) : height(h), width(w), m(Eigen::MatrixXd::Zero(3, h * w)) {}
    FeatureMap as_feature_map() const {
        FeatureMap f(3, height, width);
        f.m = m;
        return f;
    }
};

// One synthetic frame: everything the restoration pipeline consumes plus the
// supervision channels.
struct SceneRecord {
    RgbImage rgb;
    DepthImage depth_raw;  // corrupted, 0 = missing
    DepthImage depth_gt;   // perfect
    Mask object_mask;
    Mask hand_mask;
    HandKeypoints keypoints;
    CameraIntrinsics intrinsics;

    void validate() const;  // shape agreement, mask disjointness, depth positivity
};

}  // namespace rvdr
