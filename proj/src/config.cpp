#include "rvdr/config.hpp"

#include <fstream>

#include "rvdr/errors.hpp"
#include "rvdr/io.hpp"

namespace rvdr {

using nlohmann::json;

namespace {

void expect_object(const json& j, const std::string& ctx) {
    if (!j.is_object()) throw ConfigError("config: '" + ctx + "' must be an object");
}

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& ctx) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError("config: unknown key '" + ctx + it.key() + "'");
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config: bad value for '") + key + "'");
    }
}

}  // namespace

RunConfig parse_run_config(const json& j) {
    expect_object(j, "<root>");
    reject_unknown(j, {"threads", "dataset", "model", "training", "handover"}, "");
    RunConfig c;
    c.threads = get_or(j, "threads", 1);
    if (c.threads < 1) throw ConfigError("config: threads must be >= 1");

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        expect_object(d, "dataset");
        reject_unknown(d,
                       {"n_scenes", "width", "height", "focal_scale", "kind_distribution",
                        "unknown_kinds", "corruption", "rgb_augmentation", "seed"},
                       "dataset.");
        c.dataset.n_scenes = get_or(d, "n_scenes", c.dataset.n_scenes);
        c.dataset.width = get_or(d, "width", c.dataset.width);
        c.dataset.height = get_or(d, "height", c.dataset.height);
        c.dataset.focal_scale = get_or(d, "focal_scale", c.dataset.focal_scale);
        c.dataset.rgb_augmentation = get_or(d, "rgb_augmentation", c.dataset.rgb_augmentation);
        c.dataset.seed = get_or(d, "seed", c.dataset.seed);
        if (d.contains("kind_distribution")) {
            expect_object(d.at("kind_distribution"), "dataset.kind_distribution");
            c.dataset.kind_distribution.clear();
            for (auto it = d.at("kind_distribution").begin(); it != d.at("kind_distribution").end();
                 ++it)
                c.dataset.kind_distribution.emplace_back(object_kind_from_string(it.key()),
                                                         it.value().get<double>());
        }
        if (d.contains("unknown_kinds")) {
            c.dataset.unknown_kinds.clear();
            for (const json& k : d.at("unknown_kinds"))
                c.dataset.unknown_kinds.push_back(object_kind_from_string(k.get<std::string>()));
        }
        if (d.contains("corruption")) {
            const json& co = d.at("corruption");
            expect_object(co, "dataset.corruption");
            reject_unknown(co, {"p_missing", "p_background", "p_noise", "sigma"},
                           "dataset.corruption.");
            c.dataset.corruption.p_missing = get_or(co, "p_missing", c.dataset.corruption.p_missing);
            c.dataset.corruption.p_background =
                get_or(co, "p_background", c.dataset.corruption.p_background);
            c.dataset.corruption.p_noise = get_or(co, "p_noise", c.dataset.corruption.p_noise);
            c.dataset.corruption.sigma = get_or(co, "sigma", c.dataset.corruption.sigma);
            c.dataset.corruption.validate();
        }
        if (c.dataset.width % 16 != 0 || c.dataset.height % 16 != 0)
            throw ConfigError("config: dataset width/height must be divisible by 16");
    }

    if (j.contains("model")) {
        const json& m = j.at("model");
        expect_object(m, "model");
        reject_unknown(m, {"voxel_resolution", "hand_feature", "point_fusion", "multiscale",
                           "seed"},
                       "model.");
        c.model.voxel_resolution = get_or(m, "voxel_resolution", c.model.voxel_resolution);
        if (c.model.voxel_resolution < 1)
            throw ConfigError("config: voxel_resolution must be >= 1");
        if (m.contains("hand_feature"))
            c.model.hand_feature =
                hand_feature_mode_from_string(m.at("hand_feature").get<std::string>());
        c.model.point_fusion = get_or(m, "point_fusion", c.model.point_fusion);
        c.model.multiscale = get_or(m, "multiscale", c.model.multiscale);
        c.model_seed = get_or(m, "seed", c.model_seed);
    }

    if (j.contains("training")) {
        const json& t = j.at("training");
        expect_object(t, "training");
        reject_unknown(t,
                       {"epochs", "lr", "lr_late_factor", "lr_late_start", "weights", "seed",
                        "exclude_unknown"},
                       "training.");
        c.training.epochs = get_or(t, "epochs", c.training.epochs);
        c.training.lr = get_or(t, "lr", c.training.lr);
        c.training.lr_late_factor = get_or(t, "lr_late_factor", c.training.lr_late_factor);
        c.training.lr_late_start = get_or(t, "lr_late_start", c.training.lr_late_start);
        c.training.seed = get_or(t, "seed", c.training.seed);
        c.exclude_unknown = get_or(t, "exclude_unknown", c.exclude_unknown);
        if (t.contains("weights")) {
            const json& w = t.at("weights");
            expect_object(w, "training.weights");
            reject_unknown(w, {"depth", "prob", "norm"}, "training.weights.");
            c.training.weights.depth = get_or(w, "depth", c.training.weights.depth);
            c.training.weights.prob = get_or(w, "prob", c.training.weights.prob);
            c.training.weights.norm = get_or(w, "norm", c.training.weights.norm);
            if (c.training.weights.depth < 0 || c.training.weights.prob < 0 ||
                c.training.weights.norm < 0)
                throw ConfigError("config: loss weights must be >= 0");
        }
        if (c.training.epochs < 0) throw ConfigError("config: epochs must be >= 0");
    }
    c.training.threads = c.threads;

    if (j.contains("handover")) {
        const json& h = j.at("handover");
        expect_object(h, "handover");
        reject_unknown(h,
                       {"max_ticks", "max_speed", "max_ang_speed", "grasp_candidates",
                        "keypoint_noise_sigma", "seed"},
                       "handover.");
        c.handover.max_ticks = get_or(h, "max_ticks", c.handover.max_ticks);
        c.handover.max_speed = get_or(h, "max_speed", c.handover.max_speed);
        c.handover.max_ang_speed = get_or(h, "max_ang_speed", c.handover.max_ang_speed);
        c.handover.grasp_candidates = get_or(h, "grasp_candidates", c.handover.grasp_candidates);
        c.handover.keypoint_noise_sigma =
            get_or(h, "keypoint_noise_sigma", c.handover.keypoint_noise_sigma);
        c.handover.seed = get_or(h, "seed", c.handover.seed);
    }
    return c;
}

json run_config_to_json(const RunConfig& c) {
    json d;
    d["n_scenes"] = c.dataset.n_scenes;
    d["width"] = c.dataset.width;
    d["height"] = c.dataset.height;
    d["focal_scale"] = c.dataset.focal_scale;
    json kd;
    for (const auto& [kind, p] : c.dataset.kind_distribution) kd[to_string(kind)] = p;
    d["kind_distribution"] = kd;
    json uk = json::array();
    for (ObjectKind k : c.dataset.unknown_kinds) uk.push_back(to_string(k));
    d["unknown_kinds"] = uk;
    d["corruption"] = {{"p_missing", c.dataset.corruption.p_missing},
                       {"p_background", c.dataset.corruption.p_background},
                       {"p_noise", c.dataset.corruption.p_noise},
                       {"sigma", c.dataset.corruption.sigma}};
    d["rgb_augmentation"] = c.dataset.rgb_augmentation;
    d["seed"] = c.dataset.seed;

    json m;
    m["voxel_resolution"] = c.model.voxel_resolution;
    m["hand_feature"] = to_string(c.model.hand_feature);
    m["point_fusion"] = c.model.point_fusion;
    m["multiscale"] = c.model.multiscale;
    m["seed"] = c.model_seed;

    json t;
    t["epochs"] = c.training.epochs;
    t["lr"] = c.training.lr;
    t["lr_late_factor"] = c.training.lr_late_factor;
    t["lr_late_start"] = c.training.lr_late_start;
    t["weights"] = {{"depth", c.training.weights.depth},
                    {"prob", c.training.weights.prob},
                    {"norm", c.training.weights.norm}};
    t["seed"] = c.training.seed;
    t["exclude_unknown"] = c.exclude_unknown;

    json h;
    h["max_ticks"] = c.handover.max_ticks;
    h["max_speed"] = c.handover.max_speed;
    h["max_ang_speed"] = c.handover.max_ang_speed;
    h["grasp_candidates"] = c.handover.grasp_candidates;
    h["keypoint_noise_sigma"] = c.handover.keypoint_noise_sigma;
    h["seed"] = c.handover.seed;

    json out;
    out["threads"] = c.threads;
    out["dataset"] = d;
    out["model"] = m;
    out["training"] = t;
    out["handover"] = h;
    return out;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return parse_run_config(j);
}

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string config_hash(const RunConfig& c) {
    // Thread count is runtime parallelism, not semantics; keep it out of the
    // hash so --threads cannot invalidate checkpoints.
    json j = run_config_to_json(c);
    j.erase("threads");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

}  // namespace rvdr
