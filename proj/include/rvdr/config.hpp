#pragma once

#include <string>

#include <json.hpp>

#include "rvdr/datagen.hpp"
#include "rvdr/network.hpp"
#include "rvdr/training.hpp"

namespace rvdr {

// Full run configuration. Parsing is strict: unknown keys are rejected so a
// typo cannot silently fall back to a default.
struct RunConfig {
    int threads = 1;
    DatasetParams dataset;
    ModelConfig model;
    uint64_t model_seed = 3;
    TrainConfig training;
    bool exclude_unknown = false;  // drop unknown-category scenes from training

    struct Handover {
        int max_ticks = 80;
        double max_speed = 0.05;
        double max_ang_speed = 0.5;
        int grasp_candidates = 48;
        double keypoint_noise_sigma = 0.0;
        uint64_t seed = 11;
    } handover;
};

RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& c);
RunConfig load_run_config(const std::string& path);

// FNV-1a 64 over the canonical (normalized, key-sorted) JSON dump.
std::string config_hash(const RunConfig& c);
uint64_t fnv1a64(const std::string& s);

}  // namespace rvdr
