#include "rvdr/network.hpp"

#include <stdexcept>
#include <unordered_map>

#include "rvdr/errors.hpp"

namespace rvdr {

HandFeatureMode hand_feature_mode_from_string(const std::string& s) {
    if (s == "off") return HandFeatureMode::kOff;
    if (s == "2d") return HandFeatureMode::k2D;
    if (s == "3d") return HandFeatureMode::k3D;
    throw ConfigError("hand_feature must be one of off|2d|3d, got '" + s + "'");
}

std::string to_string(HandFeatureMode m) {
    switch (m) {
        case HandFeatureMode::kOff: return "off";
        case HandFeatureMode::k2D: return "2d";
        default: return "3d";
    }
}

Model Model::init(const ModelConfig& cfg, uint64_t seed) {
    Model m;
    m.config = cfg;
    Rng rng(seed);
    m.encoder.init(rng);
    m.fusion.init(rng);
    m.voxels.init(rng);
    m.offset_mlp.init({dims::kPairEmbedding, 256, 128, 1}, rng);
    m.prob_mlp.init({dims::kPairEmbedding, 256, 128, 1}, rng);
    return m;
}

std::vector<Model::ParamView> Model::param_views() {
    std::vector<ParamView> out;
    auto add_linear = [&out](const std::string& name, Linear& l) {
        out.push_back({name + ".W", l.W.rows(), l.W.cols(), l.W.data(), l.dW.data()});
        out.push_back({name + ".b", l.b.size(), 1, l.b.data(), l.db.data()});
    };
    auto add_conv = [&out](const std::string& name, Conv2d& c) {
        out.push_back({name + ".W", c.W.rows(), c.W.cols(), c.W.data(), c.dW.data()});
        out.push_back({name + ".b", c.b.size(), 1, c.b.data(), c.db.data()});
    };
    add_conv("enc.stem1", encoder.stem1);
    add_conv("enc.stem2", encoder.stem2);
    add_conv("enc.down2", encoder.down2);
    add_conv("enc.down3", encoder.down3);
    add_conv("enc.down4", encoder.down4);
    add_conv("enc.reduce", encoder.reduce);
    add_linear("fuse.xyz", fusion.xyz);
    add_linear("fuse.rgb", fusion.rgb);
    add_linear("vox.fc1", voxels.fc1);
    add_linear("vox.fc2", voxels.fc2);
    for (size_t i = 0; i < offset_mlp.layers.size(); ++i)
        add_linear("dec.offset." + std::to_string(i), offset_mlp.layers[i]);
    for (size_t i = 0; i < prob_mlp.layers.size(); ++i)
        add_linear("dec.prob." + std::to_string(i), prob_mlp.layers[i]);
    return out;
}

std::vector<std::string> Model::block_names() {
    std::vector<std::string> names;
    for (const auto& v : param_views()) names.push_back(v.name);
    return names;
}

size_t Model::parameter_count() {
    size_t n = 0;
    for (const auto& v : param_views()) n += size_t(v.size());
    return n;
}

Eigen::VectorXd Model::flat_parameters() {
    Eigen::VectorXd theta(parameter_count());
    Eigen::Index at = 0;
    for (const auto& v : param_views()) {
        theta.segment(at, v.size()) = Eigen::Map<const Eigen::VectorXd>(v.values, v.size());
        at += v.size();
    }
    return theta;
}

void Model::set_flat_parameters(const Eigen::VectorXd& theta) {
    if (theta.size() != Eigen::Index(parameter_count()))
        throw std::invalid_argument("set_flat_parameters: size mismatch");
    Eigen::Index at = 0;
    for (const auto& v : param_views()) {
        Eigen::Map<Eigen::VectorXd>(v.values, v.size()) = theta.segment(at, v.size());
        at += v.size();
    }
}

Eigen::VectorXd Model::flat_gradients() {
    Eigen::VectorXd g(parameter_count());
    Eigen::Index at = 0;
    for (const auto& v : param_views()) {
        g.segment(at, v.size()) = Eigen::Map<const Eigen::VectorXd>(v.grads, v.size());
        at += v.size();
    }
    return g;
}

void Model::zero_grad() {
    encoder.zero_grad();
    fusion.zero_grad();
    voxels.zero_grad();
    for (auto& l : offset_mlp.layers) l.zero_grad();
    for (auto& l : prob_mlp.layers) l.zero_grad();
}

bool Model::gradients_finite() {
    for (const auto& v : param_views())
        if (!Eigen::Map<const Eigen::VectorXd>(v.grads, v.size()).allFinite()) return false;
    return true;
}

PairPrediction predict_pair(Model& model, const Eigen::VectorXd& embedding, double span) {
    if (embedding.size() != dims::kPairEmbedding)
        throw std::invalid_argument("predict_pair: embedding length mismatch");
    if (!(span > 0)) throw std::invalid_argument("predict_pair: span must be positive");
    PairPrediction p;
    p.logit = model.prob_mlp.forward(embedding)(0, 0);
    p.sigma = logistic(model.offset_mlp.forward(embedding)(0, 0));
    p.delta = p.sigma * span;
    return p;
}

// ---------------------------------------------------------------------------

struct ScenePass::Tapes {
    ImageEncoder::Cache enc;
    PointFusion::Cache fusion;
    Eigen::MatrixXd fused;  // 32 x N
    std::vector<VoxelEncoder::VoxelCache> vox;
    Eigen::MatrixXd embeddings;  // 378 x P
    Mlp::Tape offset_tape, prob_tape;
    std::vector<double> spans;
};

ScenePass scene_forward(Model& model, const SceneRecord& scene, const Mask& restore_mask,
                        bool with_tapes) {
    const CameraIntrinsics& k = scene.intrinsics;
    ScenePass pass;
    pass.restored = scene.depth_raw;

    // Collect restore rays first; an empty mask is a pure passthrough.
    for (int v = 0; v < k.height; ++v)
        for (int u = 0; u < k.width; ++u)
            if (restore_mask.at(v, u)) pass.rays.push_back(pixel_ray(k, u, v));
    if (pass.rays.empty()) {
        pass.pair_begin.assign(1, 0);
        return pass;
    }

    pass.cloud = backproject(scene.depth_raw, k);
    if (pass.cloud.size() == 0) throw DataError("no valid geometry");
    pass.grid = build_voxel_grid(pass.cloud.points, model.config.voxel_resolution);

    pass.tapes = std::make_shared<ScenePass::Tapes>();
    ScenePass::Tapes& T = *pass.tapes;

    FeatureMap dense = model.encoder.forward(scene.rgb.as_feature_map(), model.config.multiscale,
                                             with_tapes ? &T.enc : nullptr);
    T.fused = model.fusion.forward(pass.cloud, pass.grid, dense, model.config.point_fusion,
                                   with_tapes ? &T.fusion : nullptr);

    // Traverse every restore ray and flatten the pairs ray-major.
    pass.trav.resize(pass.rays.size());
    pass.pair_begin.assign(pass.rays.size() + 1, 0);
    std::unordered_map<int, int> voxel_compact;
    for (size_t r = 0; r < pass.rays.size(); ++r) {
        pass.trav[r] = traverse(pass.grid, pass.rays[r], int(r));
        pass.pair_begin[r + 1] = pass.pair_begin[r] + int(pass.trav[r].size());
        for (const auto& pr : pass.trav[r]) {
            pass.pairs.push_back(pr);
            auto [it, inserted] = voxel_compact.try_emplace(pr.voxel_id, int(pass.voxel_cells.size()));
            if (inserted) pass.voxel_cells.push_back(pr.voxel_id);
            pass.pair_voxel_compact.push_back(it->second);
        }
    }

    const int n_pairs = int(pass.pairs.size());
    pass.logits = Eigen::VectorXd::Zero(n_pairs);
    pass.sigmas = Eigen::VectorXd::Zero(n_pairs);
    pass.deltas = Eigen::VectorXd::Zero(n_pairs);
    pass.selected.assign(pass.rays.size(), -1);
    if (n_pairs == 0) {
        // Unrestored mask pixels become 0.
        for (const Ray& ray : pass.rays) pass.restored.at(ray.v, ray.u) = 0.0;
        return pass;
    }

    // Voxel features for every voxel any pair touches.
    const int n_vox = int(pass.voxel_cells.size());
    Eigen::MatrixXd f_voxel(dims::kVoxelFeature, n_vox);
    T.vox.resize(size_t(n_vox));
    for (int vc = 0; vc < n_vox; ++vc) {
        const auto& cols = pass.grid.cells[size_t(pass.voxel_cells[size_t(vc)])];
        f_voxel.col(vc) = model.voxels.forward(T.fused, cols, with_tapes ? &T.vox[size_t(vc)] : nullptr);
    }

    // Hand features under the configured ablation mode.
    HandKeypoints kp = scene.keypoints;
    if (model.config.hand_feature == HandFeatureMode::k2D) kp.points.col(2).setZero();
    Eigen::VectorXd f_hand_abs = Eigen::VectorXd::Zero(dims::kHandAbs);
    Eigen::MatrixXd f_hand_rel = Eigen::MatrixXd::Zero(dims::kHandRel, n_vox);
    if (model.config.hand_feature != HandFeatureMode::kOff) {
        kp.validate();
        f_hand_abs = hand_abs_feature(kp);
        for (int vc = 0; vc < n_vox; ++vc)
            f_hand_rel.col(vc) =
                hand_rel_feature(kp, pass.grid.cell_center(pass.voxel_cells[size_t(vc)]));
    }

    // Per-ray ROI features and positional embeddings, assembled per pair.
    T.embeddings.resize(dims::kPairEmbedding, n_pairs);
    T.spans.resize(size_t(n_pairs));
    for (size_t r = 0; r < pass.rays.size(); ++r) {
        if (pass.trav[r].empty()) continue;
        const Ray& ray = pass.rays[r];
        const Eigen::VectorXd f_ray = roi_ray_feature(dense, ray.u, ray.v);
        const Eigen::VectorXd g_ray = positional_embedding(ray.dir);
        for (int p = pass.pair_begin[r]; p < pass.pair_begin[r + 1]; ++p) {
            const RayVoxelPair& pr = pass.pairs[size_t(p)];
            const int vc = pass.pair_voxel_compact[size_t(p)];
            auto col = T.embeddings.col(p);
            col.segment(0, dims::kRayFeature) = f_ray;
            col.segment(dims::kRayFeature, dims::kVoxelFeature) = f_voxel.col(vc);
            col.segment(dims::kRayFeature + dims::kVoxelFeature, dims::kHandAbs) = f_hand_abs;
            col.segment(dims::kRayFeature + dims::kVoxelFeature + dims::kHandAbs, dims::kHandRel) =
                f_hand_rel.col(vc);
            col.segment(dims::kRayFeature + dims::kVoxelFeature + dims::kHandFeature,
                        dims::kPosEmbed) = g_ray;
            col.segment(dims::kRayFeature + dims::kVoxelFeature + dims::kHandFeature +
                            dims::kPosEmbed,
                        dims::kPosEmbed) = positional_embedding(pr.t_in * ray.dir);
            T.spans[size_t(p)] = pr.span();
        }
    }

    // Decode all pairs in one batch.
    Eigen::MatrixXd z_off =
        model.offset_mlp.forward(T.embeddings, with_tapes ? &T.offset_tape : nullptr);
    Eigen::MatrixXd z_prob =
        model.prob_mlp.forward(T.embeddings, with_tapes ? &T.prob_tape : nullptr);
    for (int p = 0; p < n_pairs; ++p) {
        pass.logits[p] = z_prob(0, p);
        pass.sigmas[p] = logistic(z_off(0, p));
        pass.deltas[p] = pass.sigmas[p] * T.spans[size_t(p)];
    }

    // Ray-wise argmax composition (ties resolve to the nearest voxel because
    // pairs are in increasing t_in order).
    for (size_t r = 0; r < pass.rays.size(); ++r) {
        int best = -1;
        for (int p = pass.pair_begin[r]; p < pass.pair_begin[r + 1]; ++p)
            if (best < 0 || pass.logits[p] > pass.logits[best]) best = p;
        pass.selected[r] = best;
        const Ray& ray = pass.rays[r];
        if (best < 0) {
            pass.restored.at(ray.v, ray.u) = 0.0;
        } else {
            const RayVoxelPair& pr = pass.pairs[size_t(best)];
            pass.restored.at(ray.v, ray.u) = (pr.t_in + pass.deltas[best]) * ray.dir.z();
        }
    }

    if (!with_tapes) pass.tapes.reset();
    return pass;
}

void scene_backward(Model& model, ScenePass& pass, const Eigen::VectorXd& d_delta,
                    const Eigen::VectorXd& d_logit) {
    if (!pass.tapes) throw std::logic_error("scene_backward: forward ran without tapes");
    ScenePass::Tapes& T = *pass.tapes;
    const int n_pairs = int(pass.pairs.size());
    if (n_pairs == 0) return;

    // Heads: delta = logistic(z_off) * span.
    Eigen::MatrixXd dz_off(1, n_pairs), dz_prob(1, n_pairs);
    for (int p = 0; p < n_pairs; ++p) {
        const double s = pass.sigmas[p];
        dz_off(0, p) = d_delta[p] * T.spans[size_t(p)] * s * (1.0 - s);
        dz_prob(0, p) = d_logit[p];
    }
    Eigen::MatrixXd d_embed = model.offset_mlp.backward(T.offset_tape, dz_off);
    d_embed += model.prob_mlp.backward(T.prob_tape, dz_prob);

    FeatureMap d_dense(dims::kImageChannels, pass.restored.height, pass.restored.width);

    // Ray features: pairs of one ray share one ROI read.
    for (size_t r = 0; r < pass.rays.size(); ++r) {
        if (pass.trav[r].empty()) continue;
        Eigen::VectorXd d_fray = Eigen::VectorXd::Zero(dims::kRayFeature);
        for (int p = pass.pair_begin[r]; p < pass.pair_begin[r + 1]; ++p)
            d_fray += d_embed.col(p).segment(0, dims::kRayFeature);
        roi_ray_feature_backward(d_dense, pass.rays[r].u, pass.rays[r].v, d_fray);
    }

    // Voxel features: accumulate per compact voxel, then run its encoder tape.
    const int n_vox = int(pass.voxel_cells.size());
    Eigen::MatrixXd d_fvox = Eigen::MatrixXd::Zero(dims::kVoxelFeature, n_vox);
    for (int p = 0; p < n_pairs; ++p)
        d_fvox.col(pass.pair_voxel_compact[size_t(p)]) +=
            d_embed.col(p).segment(dims::kRayFeature, dims::kVoxelFeature);

    Eigen::MatrixXd d_fused = Eigen::MatrixXd::Zero(dims::kPointFused, T.fused.cols());
    for (int vc = 0; vc < n_vox; ++vc)
        model.voxels.backward(T.vox[size_t(vc)], d_fvox.col(vc), d_fused);

    model.fusion.backward(T.fusion, d_fused, &d_dense);
    model.encoder.backward(T.enc, d_dense);
}

DepthImage restore(Model& model, const SceneRecord& scene, const Mask& restore_mask) {
    return scene_forward(model, scene, restore_mask, false).restored;
}

}  // namespace rvdr
