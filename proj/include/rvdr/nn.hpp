#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

#include "rvdr/random.hpp"

namespace rvdr {

// Dense layers in double precision with explicit reverse passes. Gradients
// accumulate into dW/db until zero_grad().

struct Linear {
    Eigen::MatrixXd W;   // out x in
    Eigen::VectorXd b;   // out
    Eigen::MatrixXd dW;
    Eigen::VectorXd db;

    void init(int out, int in, Rng& rng) {
        W.resize(out, in);
        const double bound = std::sqrt(6.0 / double(in + out));
        for (int j = 0; j < in; ++j)
            for (int i = 0; i < out; ++i) W(i, j) = rng.uniform(-bound, bound);
        b = Eigen::VectorXd::Zero(out);
        zero_grad();
    }

    void zero_grad() {
        dW = Eigen::MatrixXd::Zero(W.rows(), W.cols());
        db = Eigen::VectorXd::Zero(b.size());
    }

    // X: in x n -> out x n
    Eigen::MatrixXd forward(const Eigen::MatrixXd& X) const {
        return (W * X).colwise() + b;
    }

    // Accumulates parameter grads; returns dX.
    Eigen::MatrixXd backward(const Eigen::MatrixXd& X, const Eigen::MatrixXd& dY) {
        dW.noalias() += dY * X.transpose();
        db.noalias() += dY.rowwise().sum();
        return W.transpose() * dY;
    }
};

// 3x3 (or 1x1) convolution with zero padding, implemented as im2col + GEMM.
// Feature maps are (channels x h*w) matrices, pixel index = y*w + x.
struct Conv2d {
    int in_ch = 0, out_ch = 0, ksize = 3, stride = 1, pad = 1;
    Eigen::MatrixXd W;   // out_ch x (in_ch*k*k)
    Eigen::VectorXd b;
    Eigen::MatrixXd dW;
    Eigen::VectorXd db;

    void init(int out, int in, int k, int s, Rng& rng) {
        in_ch = in;
        out_ch = out;
        ksize = k;
        stride = s;
        pad = k / 2;
        const int fan_in = in * k * k, fan_out = out * k * k;
        const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
        W.resize(out, in * k * k);
        for (int j = 0; j < W.cols(); ++j)
            for (int i = 0; i < W.rows(); ++i) W(i, j) = rng.uniform(-bound, bound);
        b = Eigen::VectorXd::Zero(out);
        zero_grad();
    }

    void zero_grad() {
        dW = Eigen::MatrixXd::Zero(W.rows(), W.cols());
        db = Eigen::VectorXd::Zero(b.size());
    }

    int out_h(int h) const { return (h + 2 * pad - ksize) / stride + 1; }
    int out_w(int w) const { return (w + 2 * pad - ksize) / stride + 1; }

    // Gathers padded k*k patches: (in_ch*k*k) x (out_h*out_w).
    Eigen::MatrixXd im2col(const Eigen::MatrixXd& X, int h, int w) const {
        const int oh = out_h(h), ow = out_w(w);
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(in_ch * ksize * ksize, oh * ow);
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const int col = oy * ow + ox;
                for (int ky = 0; ky < ksize; ++ky) {
                    const int sy = oy * stride + ky - pad;
                    if (sy < 0 || sy >= h) continue;
                    for (int kx = 0; kx < ksize; ++kx) {
                        const int sx = ox * stride + kx - pad;
                        if (sx < 0 || sx >= w) continue;
                        K.block((ky * ksize + kx) * in_ch, col, in_ch, 1) =
                            X.col(sy * w + sx);
                    }
                }
            }
        }
        return K;
    }

    Eigen::MatrixXd forward(const Eigen::MatrixXd& patches) const {
        return (W * patches).colwise() + b;
    }

    // dPatches -> dX (col2im scatter).
    Eigen::MatrixXd col2im(const Eigen::MatrixXd& dK, int h, int w) const {
        const int oh = out_h(h), ow = out_w(w);
        Eigen::MatrixXd dX = Eigen::MatrixXd::Zero(in_ch, h * w);
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const int col = oy * ow + ox;
                for (int ky = 0; ky < ksize; ++ky) {
                    const int sy = oy * stride + ky - pad;
                    if (sy < 0 || sy >= h) continue;
                    for (int kx = 0; kx < ksize; ++kx) {
                        const int sx = ox * stride + kx - pad;
                        if (sx < 0 || sx >= w) continue;
                        dX.col(sy * w + sx) +=
                            dK.block((ky * ksize + kx) * in_ch, col, in_ch, 1);
                    }
                }
            }
        }
        return dX;
    }

    Eigen::MatrixXd backward(const Eigen::MatrixXd& patches, const Eigen::MatrixXd& dY,
                             int h, int w) {
        dW.noalias() += dY * patches.transpose();
        db.noalias() += dY.rowwise().sum();
        return col2im(W.transpose() * dY, h, w);
    }
};

inline Eigen::MatrixXd relu(const Eigen::MatrixXd& X) { return X.cwiseMax(0.0); }

inline Eigen::MatrixXd relu_backward(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& dY) {
    return (pre.array() > 0.0).select(dY, Eigen::MatrixXd::Zero(dY.rows(), dY.cols()));
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Affine + rectifier stack; the head activation is applied by the caller.
struct Mlp {
    std::vector<Linear> layers;

    void init(const std::vector<int>& dims, Rng& rng) {
        layers.clear();
        layers.resize(dims.size() - 1);
        for (size_t i = 0; i + 1 < dims.size(); ++i) layers[i].init(dims[i + 1], dims[i], rng);
    }

    int in_dim() const { return int(layers.front().W.cols()); }
    int out_dim() const { return int(layers.back().W.rows()); }

    struct Tape {
        std::vector<Eigen::MatrixXd> inputs;  // input to each layer (post-activation)
        std::vector<Eigen::MatrixXd> pre;     // pre-activation outputs
    };

    // X: in x n -> out x n; caches activations when tape is non-null.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& X, Tape* tape = nullptr) const {
        Eigen::MatrixXd a = X;
        if (tape) {
            tape->inputs.clear();
            tape->pre.clear();
        }
        for (size_t i = 0; i < layers.size(); ++i) {
            if (tape) tape->inputs.push_back(a);
            Eigen::MatrixXd z = layers[i].forward(a);
            if (tape) tape->pre.push_back(z);
            a = (i + 1 < layers.size()) ? relu(z) : z;
        }
        return a;
    }

    // dY on the head output; returns dX and accumulates parameter grads.
    Eigen::MatrixXd backward(const Tape& tape, const Eigen::MatrixXd& dY) {
        Eigen::MatrixXd g = dY;
        for (int i = int(layers.size()) - 1; i >= 0; --i) {
            if (i + 1 < int(layers.size())) g = relu_backward(tape.pre[i], g);
            g = layers[i].backward(tape.inputs[i], g);
        }
        return g;
    }
};

}  // namespace rvdr
