#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rvdr/network.hpp"
#include "rvdr/scene.hpp"

namespace rvdr {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// RVT1 tensor container: magic "RVT1", dtype u8 (0=f32, 1=f64, 2=u8, 3=u16),
// rank u8, reserved u16 = 0, dims rank x u32 LE, payload row-major LE.

enum class Dtype : uint8_t { kF32 = 0, kF64 = 1, kU8 = 2, kU16 = 3 };

size_t dtype_size(Dtype d);

struct TensorData {
    Dtype dtype = Dtype::kF32;
    std::vector<uint32_t> dims;
    std::vector<uint8_t> payload;  // row-major little-endian

    size_t element_count() const;
};

std::vector<uint8_t> encode_tensor(const TensorData& t);
TensorData decode_tensor(const uint8_t* data, size_t size);

void write_tensor(const std::string& path, const TensorData& t);
TensorData read_tensor(const std::string& path);

// Typed helpers used by the dataset layout (depth: f32 HxW, masks: u8 HxW).
void write_depth_rvt(const std::string& path, const DepthImage& d);
DepthImage read_depth_rvt(const std::string& path);
void write_mask_rvt(const std::string& path, const Mask& m);
Mask read_mask_rvt(const std::string& path);

// ---------------------------------------------------------------------------
// Binary PPM (P6, maxval 255).

void write_ppm(const std::string& path, const RgbImage& img);
RgbImage read_ppm(const std::string& path);

// ---------------------------------------------------------------------------
// Scene directory: rgb.ppm, depth_raw.rvt, depth_gt.rvt, mask_obj.rvt,
// mask_hand.rvt, keypoints.json. Intrinsics live in the dataset manifest.

void write_scene(const std::string& scene_dir, const SceneRecord& scene);
SceneRecord read_scene(const std::string& scene_dir, const CameraIntrinsics& k);

struct Dataset {
    CameraIntrinsics intrinsics;
    std::vector<SceneRecord> scenes;
    std::vector<std::string> ids;
    std::vector<std::string> kinds;
    std::vector<int> split;  // 0 train, 1 val, 2 test
    std::vector<bool> unknown_category;
    std::string config_hash;
    json manifest;
};

Dataset load_dataset(const std::string& dir);

// ---------------------------------------------------------------------------
// Checkpoint: "RVCK1" line, manifest JSON line (block names/dims, model
// config, config hash), then one RVT1 blob per parameter block (f64).

void save_checkpoint(const std::string& path, Model& model, const std::string& config_hash);
Model load_checkpoint(const std::string& path, std::string* config_hash_out = nullptr);

// ---------------------------------------------------------------------------
// Small JSON file helpers.

json load_json(const std::string& path);
void save_json(const std::string& path, const json& j);

}  // namespace rvdr
