#include "rvdr/features.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>

namespace rvdr {

void HandKeypoints::validate() const {
    if (!points.allFinite()) throw std::invalid_argument("hand keypoints: non-finite values");
    for (int i = 0; i < 21; ++i)
        for (int j = i + 1; j < 21; ++j)
            if ((points.row(i) - points.row(j)).norm() >= 0.5)
                throw std::invalid_argument("hand keypoints: implausible span >= 0.5 m");
}

const std::array<std::pair<int, int>, 20>& hand_bones() {
    static const std::array<std::pair<int, int>, 20> bones = {{
        {0, 1},   {1, 2},   {2, 3},   {3, 4},    // thumb
        {0, 5},   {5, 6},   {6, 7},   {7, 8},    // index
        {0, 9},   {9, 10},  {10, 11}, {11, 12},  // middle
        {0, 13},  {13, 14}, {14, 15}, {15, 16},  // ring
        {0, 17},  {17, 18}, {18, 19}, {19, 20},  // pinky
    }};
    return bones;
}

Eigen::VectorXd assemble(const PairEmbedding& e) {
    if (e.f_ray.size() != dims::kRayFeature || e.f_voxel.size() != dims::kVoxelFeature ||
        e.f_hand.size() != dims::kHandFeature || e.gamma_ray.size() != dims::kPosEmbed ||
        e.gamma_voxel.size() != dims::kPosEmbed)
        throw std::invalid_argument("assemble: component length mismatch");
    Eigen::VectorXd out(dims::kPairEmbedding);
    out << e.f_ray, e.f_voxel, e.f_hand, e.gamma_ray, e.gamma_voxel;
    return out;
}

Eigen::VectorXd positional_embedding(const Eigen::Vector3d& x, int octaves) {
    if (!x.allFinite()) throw std::invalid_argument("positional_embedding: non-finite input");
    Eigen::VectorXd out(2 * 3 * octaves);
    int idx = 0;
    for (int k = 0; k < octaves; ++k) {
        const double freq = std::ldexp(M_PI, k);  // 2^k * pi
        for (int c = 0; c < 3; ++c) {
            out[idx++] = std::sin(freq * x[c]);
            out[idx++] = std::cos(freq * x[c]);
        }
    }
    return out;
}

Eigen::VectorXd hand_abs_feature(const HandKeypoints& kp) {
    const Eigen::Vector3d w = kp.wrist();
    const Eigen::Vector3d to_middle = kp.points.row(HandKeypoints::kMiddleMcp).transpose() - w;
    const Eigen::Vector3d to_index = kp.points.row(HandKeypoints::kIndexMcp).transpose() - w;
    const double nm = to_middle.norm();
    if (nm < 1e-12) throw std::invalid_argument("degenerate hand frame");
    const Eigen::Vector3d xhat = to_middle / nm;
    const Eigen::Vector3d perp = to_index - to_index.dot(xhat) * xhat;
    // Collinearity gate: angle between the two frame vectors below 1e-6 rad.
    if (perp.norm() < 1e-6 * to_index.norm() || to_index.norm() < 1e-12)
        throw std::invalid_argument("degenerate hand frame");
    const Eigen::Vector3d yhat = perp.normalized();
    const Eigen::Vector3d zhat = xhat.cross(yhat);
    Eigen::Matrix3d frame;
    frame.col(0) = xhat;
    frame.col(1) = yhat;
    frame.col(2) = zhat;

    Eigen::VectorXd out(dims::kHandAbs);
    for (int i = 0; i < 21; ++i)
        out.segment<3>(3 * i) = frame.transpose() * (kp.points.row(i).transpose() - w);
    return out;
}

Eigen::VectorXd hand_rel_feature(const HandKeypoints& kp, const Eigen::Vector3d& voxel_center) {
    Eigen::VectorXd out(dims::kHandRel);
    for (int i = 0; i < 21; ++i)
        out.segment<3>(3 * i) = kp.points.row(i).transpose() - voxel_center;
    return out;
}

// ---------------------------------------------------------------------------
// Bilinear resampling shared by the encoder stages.

namespace {

struct BilinearTap {
    int idx[4];
    double w[4];
};

BilinearTap bilinear_tap(int y, int x, int ih, int iw, int oh, int ow) {
    const double sy = std::clamp((y + 0.5) * double(ih) / oh - 0.5, 0.0, double(ih - 1));
    const double sx = std::clamp((x + 0.5) * double(iw) / ow - 0.5, 0.0, double(iw - 1));
    const int y0 = int(sy), x0 = int(sx);
    const int y1 = std::min(y0 + 1, ih - 1), x1 = std::min(x0 + 1, iw - 1);
    const double fy = sy - y0, fx = sx - x0;
    BilinearTap t;
    t.idx[0] = y0 * iw + x0;
    t.idx[1] = y0 * iw + x1;
    t.idx[2] = y1 * iw + x0;
    t.idx[3] = y1 * iw + x1;
    t.w[0] = (1 - fy) * (1 - fx);
    t.w[1] = (1 - fy) * fx;
    t.w[2] = fy * (1 - fx);
    t.w[3] = fy * fx;
    return t;
}

Eigen::MatrixXd bilinear_resize(const Eigen::MatrixXd& src, int ih, int iw, int oh, int ow) {
    Eigen::MatrixXd dst(src.rows(), oh * ow);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            const BilinearTap t = bilinear_tap(y, x, ih, iw, oh, ow);
            dst.col(y * ow + x) = t.w[0] * src.col(t.idx[0]) + t.w[1] * src.col(t.idx[1]) +
                                  t.w[2] * src.col(t.idx[2]) + t.w[3] * src.col(t.idx[3]);
        }
    }
    return dst;
}

Eigen::MatrixXd bilinear_resize_backward(const Eigen::MatrixXd& d_dst, int ih, int iw, int oh,
                                         int ow) {
    Eigen::MatrixXd d_src = Eigen::MatrixXd::Zero(d_dst.rows(), ih * iw);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            const BilinearTap t = bilinear_tap(y, x, ih, iw, oh, ow);
            for (int k = 0; k < 4; ++k) d_src.col(t.idx[k]) += t.w[k] * d_dst.col(y * ow + x);
        }
    }
    return d_src;
}

}  // namespace

// ---------------------------------------------------------------------------
// ImageEncoder

void ImageEncoder::init(Rng& rng) {
    const int c = dims::kPyramidBase;
    stem1.init(c / 2, 3, 3, 2, rng);
    stem2.init(c, c / 2, 3, 2, rng);
    down2.init(2 * c, c, 3, 2, rng);
    down3.init(3 * c, 2 * c, 3, 2, rng);
    down4.init(4 * c, 3 * c, 3, 2, rng);
    reduce.init(dims::kImageChannels, 10 * c, 1, 1, rng);
}

void ImageEncoder::zero_grad() {
    for (Conv2d* c : {&stem1, &stem2, &down2, &down3, &down4, &reduce}) c->zero_grad();
}

FeatureMap ImageEncoder::forward(const FeatureMap& rgb, bool multiscale, Cache* cache) const {
    const int h = rgb.height, w = rgb.width;
    if (h % 16 != 0 || w % 16 != 0)
        throw std::invalid_argument("encode_image: image size must be divisible by 16");
    if (rgb.channels() != 3) throw std::invalid_argument("encode_image: expected 3 channels");

    Cache local;
    Cache& c = cache ? *cache : local;
    c.h = h;
    c.w = w;
    c.multiscale = multiscale;
    c.patches.clear();
    c.pre.clear();
    c.stage_h.clear();
    c.stage_w.clear();

    const Conv2d* stages[5] = {&stem1, &stem2, &down2, &down3, &down4};
    Eigen::MatrixXd x = rgb.m;
    int xh = h, xw = w;
    std::vector<Eigen::MatrixXd> levels;  // post-relu maps of stem2/down2/down3/down4
    std::vector<std::pair<int, int>> level_size;
    for (int s = 0; s < 5; ++s) {
        c.patches.push_back(stages[s]->im2col(x, xh, xw));
        Eigen::MatrixXd z = stages[s]->forward(c.patches.back());
        c.pre.push_back(z);
        xh = stages[s]->out_h(xh);
        xw = stages[s]->out_w(xw);
        c.stage_h.push_back(xh);
        c.stage_w.push_back(xw);
        x = relu(z);
        if (s >= 1) {
            levels.push_back(x);
            level_size.emplace_back(xh, xw);
        }
    }

    const int h4 = h / 4, w4 = w / 4;
    c.concat.resize(10 * dims::kPyramidBase, h4 * w4);
    int row = 0;
    for (size_t l = 0; l < levels.size(); ++l) {
        Eigen::MatrixXd up = (level_size[l].first == h4 && level_size[l].second == w4)
                                 ? levels[l]
                                 : bilinear_resize(levels[l], level_size[l].first,
                                                   level_size[l].second, h4, w4);
        if (!multiscale && l > 0) up.setZero();
        c.concat.middleRows(row, up.rows()) = up;
        row += int(up.rows());
    }

    c.reduced = reduce.forward(c.concat);

    FeatureMap out(dims::kImageChannels, h, w);
    out.m = bilinear_resize(c.reduced, h4, w4, h, w);
    return out;
}

void ImageEncoder::backward(const Cache& c, const FeatureMap& d_out) {
    const int h = c.h, w = c.w, h4 = h / 4, w4 = w / 4;
    Eigen::MatrixXd d_reduced = bilinear_resize_backward(d_out.m, h4, w4, h, w);
    Eigen::MatrixXd d_concat = reduce.backward(c.concat, d_reduced, h4, w4);

    // Split the concat gradient back into per-level gradients.
    const int level_ch[4] = {16, 32, 48, 64};
    Eigen::MatrixXd d_level[4];
    int row = 0;
    for (int l = 0; l < 4; ++l) {
        Eigen::MatrixXd d_up = d_concat.middleRows(row, level_ch[l]);
        row += level_ch[l];
        if (!c.multiscale && l > 0) d_up.setZero();
        const int lh = c.stage_h[l + 1], lw = c.stage_w[l + 1];
        d_level[l] = (lh == h4 && lw == w4) ? d_up : bilinear_resize_backward(d_up, lh, lw, h4, w4);
    }

    // Walk the stage chain in reverse; level outputs feed both the next stage
    // and the aggregation, so their gradients add.
    Conv2d* stages[5] = {&stem1, &stem2, &down2, &down3, &down4};
    Eigen::MatrixXd d_x;  // gradient w.r.t. stage s output (post-relu)
    for (int s = 4; s >= 0; --s) {
        Eigen::MatrixXd d_post = (s >= 1) ? d_level[s - 1] : Eigen::MatrixXd::Zero(
                                                                 c.pre[s].rows(), c.pre[s].cols());
        if (s < 4 && d_x.size() > 0) d_post += d_x;
        const int in_h = (s == 0) ? h : c.stage_h[s - 1];
        const int in_w = (s == 0) ? w : c.stage_w[s - 1];
        Eigen::MatrixXd d_z = relu_backward(c.pre[s], d_post);
        d_x = stages[s]->backward(c.patches[s], d_z, in_h, in_w);
    }
}

// ---------------------------------------------------------------------------
// ROI ray feature

Eigen::VectorXd roi_ray_feature(const FeatureMap& m, int u, int v) {
    if (u < 0 || u >= m.width || v < 0 || v >= m.height)
        throw std::invalid_argument("roi_ray_feature: pixel out of bounds");
    const int ch = m.channels();
    Eigen::VectorXd out(4 * ch);
    for (int cy = 0; cy < 2; ++cy) {
        for (int cx = 0; cx < 2; ++cx) {
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(ch);
            for (int dy = 0; dy < 4; ++dy) {
                const int y = std::clamp(v - 3 + 4 * cy + dy, 0, m.height - 1);
                for (int dx = 0; dx < 4; ++dx) {
                    const int x = std::clamp(u - 3 + 4 * cx + dx, 0, m.width - 1);
                    acc += m.m.col(y * m.width + x);
                }
            }
            out.segment((cy * 2 + cx) * ch, ch) = acc / 16.0;
        }
    }
    return out;
}

void roi_ray_feature_backward(FeatureMap& d_map, int u, int v, const Eigen::VectorXd& d_feat) {
    const int ch = d_map.channels();
    for (int cy = 0; cy < 2; ++cy) {
        for (int cx = 0; cx < 2; ++cx) {
            const Eigen::VectorXd g = d_feat.segment((cy * 2 + cx) * ch, ch) / 16.0;
            for (int dy = 0; dy < 4; ++dy) {
                const int y = std::clamp(v - 3 + 4 * cy + dy, 0, d_map.height - 1);
                for (int dx = 0; dx < 4; ++dx) {
                    const int x = std::clamp(u - 3 + 4 * cx + dx, 0, d_map.width - 1);
                    d_map.m.col(y * d_map.width + x) += g;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// PointFusion

void PointFusion::init(Rng& rng) {
    xyz.init(dims::kPointGeom, 3, rng);
    rgb.init(dims::kPointColor, dims::kImageChannels, rng);
}

void PointFusion::zero_grad() {
    xyz.zero_grad();
    rgb.zero_grad();
}

Eigen::MatrixXd PointFusion::forward(const PointCloud& cloud, const VoxelGrid& grid,
                                     const FeatureMap& dense, bool fuse_color,
                                     Cache* cache) const {
    const int n = int(cloud.size());
    Eigen::MatrixXd x_rel(3, n);
    Eigen::MatrixXd f_rgb(dims::kImageChannels, n);
    std::vector<int> pix(n);
    const Eigen::Vector3d lo = grid.box_min(), hi = grid.box_max();
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector3d& p = cloud.points[i];
        if ((p.array() < lo.array()).any() || (p.array() > hi.array()).any())
            throw std::invalid_argument("fuse_point_features: point outside grid");
        const Eigen::Vector3i c = grid.locate(p);
        const Eigen::Vector3d center = grid.cell_min(c) + 0.5 * grid.cell_size;
        x_rel.col(i) = (p - center).cwiseQuotient(grid.cell_size);
        pix[i] = cloud.pixel_v[i] * dense.width + cloud.pixel_u[i];
        f_rgb.col(i) = dense.m.col(pix[i]);
    }

    Eigen::MatrixXd fused(dims::kPointFused, n);
    fused.topRows(dims::kPointGeom) = xyz.forward(x_rel);
    if (fuse_color)
        fused.bottomRows(dims::kPointColor) = rgb.forward(f_rgb);
    else
        fused.bottomRows(dims::kPointColor).setZero();

    if (cache) {
        cache->x_rel = std::move(x_rel);
        cache->f_rgb = std::move(f_rgb);
        cache->pixel = std::move(pix);
        cache->fuse_color = fuse_color;
    }
    return fused;
}

void PointFusion::backward(const Cache& cache, const Eigen::MatrixXd& d_fused,
                           FeatureMap* d_dense) {
    xyz.backward(cache.x_rel, d_fused.topRows(dims::kPointGeom));
    if (!cache.fuse_color) return;
    Eigen::MatrixXd d_frgb = rgb.backward(cache.f_rgb, d_fused.bottomRows(dims::kPointColor));
    if (d_dense) {
        for (size_t i = 0; i < cache.pixel.size(); ++i)
            d_dense->m.col(cache.pixel[i]) += d_frgb.col(int(i));
    }
}

// ---------------------------------------------------------------------------
// VoxelEncoder

void VoxelEncoder::init(Rng& rng) {
    fc1.init(dims::kPointFused, dims::kPointFused, rng);
    fc2.init(dims::kVoxelFeature, dims::kVoxelFeature, rng);
}

void VoxelEncoder::zero_grad() {
    fc1.zero_grad();
    fc2.zero_grad();
}

namespace {

// Rowwise max with first-attaining argmax.
template <int Rows>
Eigen::VectorXd rowwise_max(const Eigen::MatrixXd& m, std::array<int, Rows>& argmax) {
    Eigen::VectorXd out(m.rows());
    for (int r = 0; r < m.rows(); ++r) {
        int best = 0;
        for (int c = 1; c < m.cols(); ++c)
            if (m(r, c) > m(r, best)) best = c;
        argmax[size_t(r)] = best;
        out[r] = m(r, best);
    }
    return out;
}

}  // namespace

Eigen::VectorXd VoxelEncoder::forward(const Eigen::MatrixXd& fused,
                                      const std::vector<int>& point_cols,
                                      VoxelCache* cache) const {
    if (point_cols.empty()) throw std::invalid_argument("encode_voxel: empty voxel");
    const int n = int(point_cols.size());
    Eigen::MatrixXd x(dims::kPointFused, n);
    for (int i = 0; i < n; ++i) x.col(i) = fused.col(point_cols[i]);

    VoxelCache local;
    VoxelCache& c = cache ? *cache : local;
    c.point_cols = point_cols;
    c.x = x;
    c.h1 = fc1.forward(x);
    Eigen::VectorXd m1 = rowwise_max<32>(c.h1, c.argmax1);

    c.g.resize(2 * dims::kPointFused, n);
    c.g.topRows(dims::kPointFused) = c.h1;
    c.g.bottomRows(dims::kPointFused) = m1.replicate(1, n);

    Eigen::MatrixXd h2 = fc2.forward(c.g);
    return rowwise_max<64>(h2, c.argmax2);
}

void VoxelEncoder::backward(const VoxelCache& c, const Eigen::VectorXd& d_voxel,
                            Eigen::MatrixXd& d_fused) {
    const int n = int(c.point_cols.size());
    Eigen::MatrixXd d_h2 = Eigen::MatrixXd::Zero(dims::kVoxelFeature, n);
    for (int r = 0; r < dims::kVoxelFeature; ++r) d_h2(r, c.argmax2[size_t(r)]) += d_voxel[r];

    Eigen::MatrixXd d_g = fc2.backward(c.g, d_h2);
    Eigen::MatrixXd d_h1 = d_g.topRows(dims::kPointFused);
    const Eigen::VectorXd d_m1 = d_g.bottomRows(dims::kPointFused).rowwise().sum();
    for (int r = 0; r < dims::kPointFused; ++r) d_h1(r, c.argmax1[size_t(r)]) += d_m1[r];

    Eigen::MatrixXd d_x = fc1.backward(c.x, d_h1);
    for (int i = 0; i < n; ++i) d_fused.col(c.point_cols[i]) += d_x.col(i);
}

}  // namespace rvdr
