#include "rvdr/training.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rvdr/errors.hpp"
#include "rvdr/metrics.hpp"
#include "rvdr/random.hpp"

namespace rvdr {

SceneTargets build_targets(const SceneRecord& scene, const ScenePass& pass) {
    SceneTargets t;
    t.rays.resize(pass.rays.size());
    for (size_t r = 0; r < pass.rays.size(); ++r) {
        const Ray& ray = pass.rays[r];
        RayTarget& rt = t.rays[r];
        const double d_true = scene.depth_gt.at(ray.v, ray.u);
        if (!(d_true > 0)) {
            ++t.excluded;
            continue;
        }
        const double t_true = d_true / ray.dir.z();
        rt.true_depth = d_true;
        // First containing voxel under the half-open rule; a point exactly on
        // the exit face of the last containing pair gets offset == span.
        const int begin = pass.pair_begin[r], end = pass.pair_begin[r + 1];
        for (int p = begin; p < end && rt.pair_local < 0; ++p) {
            const RayVoxelPair& pr = pass.pairs[size_t(p)];
            if (t_true >= pr.t_in && t_true < pr.t_out) rt.pair_local = p - begin;
        }
        if (rt.pair_local < 0) {
            for (int p = begin; p < end && rt.pair_local < 0; ++p)
                if (t_true == pass.pairs[size_t(p)].t_out) rt.pair_local = p - begin;
        }
        if (rt.pair_local < 0) {
            ++t.excluded;
            continue;
        }
        rt.supervised = true;
        rt.true_offset = t_true - pass.pairs[size_t(begin + rt.pair_local)].t_in;
        ++t.supervised;
    }
    return t;
}

double supervised_ray_fraction(const SceneRecord& scene, int voxel_resolution) {
    const CameraIntrinsics& k = scene.intrinsics;
    PointCloud cloud = backproject(scene.depth_raw, k);
    if (cloud.size() == 0) return 0.0;
    const VoxelGrid grid = build_voxel_grid(cloud.points, voxel_resolution);
    long mask_rays = 0, supervised = 0;
    for (int v = 0; v < k.height; ++v) {
        for (int u = 0; u < k.width; ++u) {
            if (!scene.object_mask.at(v, u)) continue;
            ++mask_rays;
            const Ray ray = pixel_ray(k, u, v);
            const double d_true = scene.depth_gt.at(v, u);
            if (!(d_true > 0)) continue;
            const double t_true = d_true / ray.dir.z();
            for (const RayVoxelPair& pr : traverse(grid, ray)) {
                if (t_true >= pr.t_in && t_true <= pr.t_out) {
                    ++supervised;
                    break;
                }
            }
        }
    }
    return mask_rays == 0 ? 1.0 : double(supervised) / double(mask_rays);
}

double loss_depth(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size()) throw std::invalid_argument("loss_depth: size mismatch");
    if (pred.empty()) throw DataError("no supervision");
    double s = 0;
    for (size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
    return s / double(pred.size());
}

double loss_prob(const std::vector<std::vector<double>>& logits_per_ray,
                 const std::vector<int>& target_index) {
    if (logits_per_ray.size() != target_index.size())
        throw std::invalid_argument("loss_prob: size mismatch");
    if (logits_per_ray.empty()) throw DataError("no supervision");
    double s = 0;
    for (size_t r = 0; r < logits_per_ray.size(); ++r) {
        const auto& logits = logits_per_ray[r];
        const int k = target_index[r];
        if (logits.empty() || k < 0 || k >= int(logits.size()))
            throw std::invalid_argument("loss_prob: target index out of range");
        const double mx = *std::max_element(logits.begin(), logits.end());
        double lse = 0;
        for (double z : logits) lse += std::exp(z - mx);
        s += std::log(lse) + mx - logits[size_t(k)];
    }
    return s / double(logits_per_ray.size());
}

namespace {

inline Eigen::Vector3d pixel_dir_over_z(const CameraIntrinsics& k, int u, int v) {
    return {(u + 0.5 - k.cx) / k.fx, (v + 0.5 - k.cy) / k.fy, 1.0};
}

}  // namespace

NormalMap normals_from_depth(const DepthImage& d, const CameraIntrinsics& k, const Mask& mask) {
    NormalMap nm;
    nm.height = d.height;
    nm.width = d.width;
    nm.n = Eigen::MatrixXd::Zero(3, d.height * d.width);
    nm.valid = Mask(d.height, d.width);
    for (int v = 1; v + 1 < d.height; ++v) {
        for (int u = 1; u + 1 < d.width; ++u) {
            if (!mask.at(v, u)) continue;
            if (!mask.at(v, u - 1) || !mask.at(v, u + 1) || !mask.at(v - 1, u) ||
                !mask.at(v + 1, u))
                continue;  // mask interior only
            const double dl = d.at(v, u - 1), dr = d.at(v, u + 1);
            const double du = d.at(v - 1, u), dd = d.at(v + 1, u);
            if (!(dl > 0 && dr > 0 && du > 0 && dd > 0)) continue;  // neighbor missing
            const Eigen::Vector3d a =
                pixel_dir_over_z(k, u + 1, v) * dr - pixel_dir_over_z(k, u - 1, v) * dl;
            const Eigen::Vector3d b =
                pixel_dir_over_z(k, u, v + 1) * dd - pixel_dir_over_z(k, u, v - 1) * du;
            Eigen::Vector3d n0 = a.cross(b);
            const double len = n0.norm();
            if (!(len > 0)) continue;
            Eigen::Vector3d n = n0 / len;
            if (n.dot(pixel_dir_over_z(k, u, v)) > 0) n = -n;
            nm.n.col(v * d.width + u) = n;
            nm.valid.at(v, u) = 1;
        }
    }
    return nm;
}

void normals_from_depth_backward(const DepthImage& d, const CameraIntrinsics& k,
                                 const NormalMap& nm, const Eigen::MatrixXd& d_n,
                                 DepthImage& d_depth) {
    for (int v = 1; v + 1 < d.height; ++v) {
        for (int u = 1; u + 1 < d.width; ++u) {
            if (!nm.valid.at(v, u)) continue;
            const Eigen::Vector3d g = d_n.col(v * d.width + u);
            if (g.isZero(0.0)) continue;
            const Eigen::Vector3d el = pixel_dir_over_z(k, u - 1, v);
            const Eigen::Vector3d er = pixel_dir_over_z(k, u + 1, v);
            const Eigen::Vector3d eu = pixel_dir_over_z(k, u, v - 1);
            const Eigen::Vector3d ed = pixel_dir_over_z(k, u, v + 1);
            const double dl = d.at(v, u - 1), dr = d.at(v, u + 1);
            const double du = d.at(v - 1, u), dd = d.at(v + 1, u);
            const Eigen::Vector3d a = er * dr - el * dl;
            const Eigen::Vector3d b = ed * dd - eu * du;
            Eigen::Vector3d n0 = a.cross(b);
            const double len = n0.norm();
            const Eigen::Vector3d nhat = n0 / len;
            // Orientation flip is a constant sign factor in a neighborhood.
            const double s = (nhat.dot(pixel_dir_over_z(k, u, v)) > 0) ? -1.0 : 1.0;
            const Eigen::Vector3d d_n0 = s * (g - nhat * nhat.dot(g)) / len;
            const Eigen::Vector3d d_a = b.cross(d_n0);
            const Eigen::Vector3d d_b = d_n0.cross(a);
            d_depth.at(v, u + 1) += er.dot(d_a);
            d_depth.at(v, u - 1) -= el.dot(d_a);
            d_depth.at(v + 1, u) += ed.dot(d_b);
            d_depth.at(v - 1, u) -= eu.dot(d_b);
        }
    }
}

double loss_norm(const NormalMap& pred, const NormalMap& truth) {
    if (pred.height != truth.height || pred.width != truth.width)
        throw std::invalid_argument("loss_norm: shape mismatch");
    double s = 0;
    long n = 0;
    for (int v = 0; v < pred.height; ++v) {
        for (int u = 0; u < pred.width; ++u) {
            if (!pred.valid.at(v, u) || !truth.valid.at(v, u)) continue;
            s += 1.0 - pred.n.col(v * pred.width + u).dot(truth.n.col(v * pred.width + u));
            ++n;
        }
    }
    return n == 0 ? 0.0 : s / double(n);
}

LossBreakdown total_loss(Model& model, const SceneRecord& scene, const LossWeights& w,
                         bool with_grad) {
    ScenePass pass = scene_forward(model, scene, scene.object_mask, with_grad);
    const SceneTargets targets = build_targets(scene, pass);
    LossBreakdown lb;
    lb.supervised = targets.supervised;
    lb.excluded = targets.excluded;
    if (targets.supervised == 0) throw DataError("no supervision");

    // Depth L1 over supervised rays (composed prediction vs ground truth).
    std::vector<double> pred, truth;
    std::vector<std::vector<double>> logits_per_ray;
    std::vector<int> target_idx;
    pred.reserve(size_t(targets.supervised));
    for (size_t r = 0; r < pass.rays.size(); ++r) {
        const RayTarget& rt = targets.rays[r];
        if (!rt.supervised) continue;
        const Ray& ray = pass.rays[r];
        pred.push_back(pass.restored.at(ray.v, ray.u));
        truth.push_back(rt.true_depth);
        std::vector<double> logits(size_t(pass.pair_begin[r + 1] - pass.pair_begin[r]));
        for (int p = pass.pair_begin[r]; p < pass.pair_begin[r + 1]; ++p)
            logits[size_t(p - pass.pair_begin[r])] = pass.logits[p];
        logits_per_ray.push_back(std::move(logits));
        target_idx.push_back(rt.pair_local);
    }
    lb.depth = loss_depth(pred, truth);
    lb.prob = loss_prob(logits_per_ray, target_idx);

    const NormalMap nm_pred = normals_from_depth(pass.restored, scene.intrinsics, scene.object_mask);
    const NormalMap nm_true = normals_from_depth(scene.depth_gt, scene.intrinsics, scene.object_mask);
    long norm_px = 0;
    for (int v = 0; v < nm_pred.height; ++v)
        for (int u = 0; u < nm_pred.width; ++u)
            if (nm_pred.valid.at(v, u) && nm_true.valid.at(v, u)) ++norm_px;
    lb.norm_pixels = int(norm_px);
    lb.norm = loss_norm(nm_pred, nm_true);
    lb.total = w.depth * lb.depth + w.prob * lb.prob + w.norm * lb.norm;

    if (!with_grad) return lb;

    const int n_pairs = int(pass.pairs.size());
    Eigen::VectorXd d_delta = Eigen::VectorXd::Zero(n_pairs);
    Eigen::VectorXd d_logit = Eigen::VectorXd::Zero(n_pairs);
    const double inv_s = 1.0 / double(targets.supervised);

    for (size_t r = 0; r < pass.rays.size(); ++r) {
        const RayTarget& rt = targets.rays[r];
        if (!rt.supervised) continue;
        const Ray& ray = pass.rays[r];
        // L1 depth routes through the argmax-selected pair's offset.
        const int sel = pass.selected[r];
        const double diff = pass.restored.at(ray.v, ray.u) - rt.true_depth;
        const double sgn = (diff > 0) - (diff < 0);
        d_delta[sel] += w.depth * sgn * inv_s * ray.dir.z();

        // Softmax cross-entropy over the ray's pair logits.
        const int begin = pass.pair_begin[r], end = pass.pair_begin[r + 1];
        double mx = -std::numeric_limits<double>::infinity();
        for (int p = begin; p < end; ++p) mx = std::max(mx, pass.logits[p]);
        double lse = 0;
        for (int p = begin; p < end; ++p) lse += std::exp(pass.logits[p] - mx);
        for (int p = begin; p < end; ++p) {
            const double soft = std::exp(pass.logits[p] - mx) / lse;
            const double ind = (p - begin == rt.pair_local) ? 1.0 : 0.0;
            d_logit[p] += w.prob * (soft - ind) * inv_s;
        }
    }

    // Surface-normal term: adjoint on predicted normals -> depth -> offsets.
    if (norm_px > 0) {
        Eigen::MatrixXd d_n = Eigen::MatrixXd::Zero(3, nm_pred.height * nm_pred.width);
        const double inv_n = 1.0 / double(norm_px);
        for (int v = 0; v < nm_pred.height; ++v)
            for (int u = 0; u < nm_pred.width; ++u)
                if (nm_pred.valid.at(v, u) && nm_true.valid.at(v, u))
                    d_n.col(v * nm_pred.width + u) =
                        -w.norm * inv_n * nm_true.n.col(v * nm_pred.width + u);
        DepthImage d_depth(pass.restored.height, pass.restored.width);
        normals_from_depth_backward(pass.restored, scene.intrinsics, nm_pred, d_n, d_depth);
        for (size_t r = 0; r < pass.rays.size(); ++r) {
            const int sel = pass.selected[r];
            if (sel < 0) continue;
            const Ray& ray = pass.rays[r];
            d_delta[sel] += d_depth.at(ray.v, ray.u) * ray.dir.z();
        }
    }

    scene_backward(model, pass, d_delta, d_logit);
    return lb;
}

AdamState AdamState::init(size_t n) {
    AdamState s;
    s.m = Eigen::VectorXd::Zero(Eigen::Index(n));
    s.v = Eigen::VectorXd::Zero(Eigen::Index(n));
    return s;
}

void adam_step(AdamState& state, Model& model, double lr) {
    if (!model.gradients_finite()) throw DivergenceError("diverged: non-finite gradient");
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    Eigen::Index at = 0;
    for (const auto& view : model.param_views()) {
        Eigen::Map<Eigen::VectorXd> theta(view.values, view.size());
        Eigen::Map<const Eigen::VectorXd> g(view.grads, view.size());
        auto m = state.m.segment(at, view.size());
        auto v = state.v.segment(at, view.size());
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
        theta -= lr * (m / bc1).cwiseQuotient(((v / bc2).cwiseSqrt().array() + state.eps).matrix());
        at += view.size();
    }
}

double lr_at_epoch(int epoch, int total_epochs, double base_lr, double late_factor,
                   double late_start) {
    return (double(epoch) < late_start * double(total_epochs)) ? base_lr : base_lr * late_factor;
}

TrainResult train(Model model, const std::vector<TrainScene>& train_scenes,
                  const std::vector<const SceneRecord*>& val_scenes, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
    TrainResult res;
    res.best_val_rmse = std::numeric_limits<double>::infinity();
    AdamState adam = AdamState::init(model.parameter_count());
    Eigen::VectorXd best = model.flat_parameters();
    Eigen::VectorXd last_good = best;

    std::vector<size_t> order(train_scenes.size());
    std::iota(order.begin(), order.end(), size_t(0));

    for (int epoch = 0; epoch < cfg.epochs && !res.diverged; ++epoch) {
        const double lr = lr_at_epoch(epoch, cfg.epochs, cfg.lr, cfg.lr_late_factor,
                                      cfg.lr_late_start);
        // Seeded per-epoch shuffle (Fisher-Yates).
        Rng rng(derive_seed(cfg.seed, uint64_t(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[size_t(rng.index(i))]);

        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        long steps = 0;
        for (size_t idx : order) {
            model.zero_grad();
            LossBreakdown lb;
            try {
                lb = total_loss(model, *train_scenes[idx].scene, cfg.weights, true);
            } catch (const DataError&) {
                continue;  // scene with no supervised rays
            }
            if (!std::isfinite(lb.total)) {
                res.diverged = true;
                break;
            }
            try {
                adam_step(adam, model, lr);
            } catch (const DivergenceError&) {
                res.diverged = true;
                break;
            }
            last_good = model.flat_parameters();
            log.loss_total += lb.total;
            log.loss_depth += lb.depth;
            log.loss_prob += lb.prob;
            log.loss_norm += lb.norm;
            log.excluded_rays += lb.excluded;
            ++steps;
        }
        if (res.diverged) {
            model.set_flat_parameters(last_good);
            break;
        }
        if (steps > 0) {
            log.loss_total /= double(steps);
            log.loss_depth /= double(steps);
            log.loss_prob /= double(steps);
            log.loss_norm /= double(steps);
        }

        if (!val_scenes.empty()) {
            MetricAccumulator acc;
            for (const SceneRecord* s : val_scenes)
                acc.add(restore(model, *s, s->object_mask), s->depth_gt, s->object_mask);
            const MetricReport r = acc.report();
            ValMetrics vm{r.rmse, r.rel, r.mae, r.delta_105, r.delta_110, r.delta_125};
            log.val = vm;
            if (r.rmse < res.best_val_rmse) {
                res.best_val_rmse = r.rmse;
                best = model.flat_parameters();
            }
        } else {
            best = model.flat_parameters();
        }
        if (on_epoch) on_epoch(log);
        res.log.push_back(log);
    }

    if (!res.diverged) model.set_flat_parameters(best);
    res.model = std::move(model);
    return res;
}

}  // namespace rvdr
