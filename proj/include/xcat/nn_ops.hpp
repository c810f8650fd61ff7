#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "xcat/tensor.hpp"

namespace xcat {

// Convolution weights in (out, in, kh, kw) order, flat kernel array.
template <typename Scalar>
struct ConvWeights {
    int out_channels = 0;
    int in_channels = 0;
    int kh = 0;
    int kw = 0;
    std::vector<Scalar> kernel;  // out*in*kh*kw
    std::vector<Scalar> bias;    // out
    bool trainable = true;

    ConvWeights() = default;
    ConvWeights(int out, int in, int k) : ConvWeights(out, in, k, k) {}
    ConvWeights(int out, int in, int kh_, int kw_)
        : out_channels(out), in_channels(in), kh(kh_), kw(kw_),
          kernel(static_cast<std::size_t>(out) * in * kh_ * kw_, Scalar(0)),
          bias(static_cast<std::size_t>(out), Scalar(0)) {}

    Scalar k(int o, int c, int i, int j) const {
        return kernel[kidx(o, c, i, j)];
    }
    Scalar& k(int o, int c, int i, int j) {
        return kernel[kidx(o, c, i, j)];
    }

    std::size_t kidx(int o, int c, int i, int j) const {
        return static_cast<std::size_t>(((static_cast<std::int64_t>(o) * in_channels + c) *
                                             kh + i) * kw + j);
    }

    std::int64_t kernel_size() const {
        return static_cast<std::int64_t>(out_channels) * in_channels * kh * kw;
    }

    template <typename Other>
    ConvWeights<Other> cast() const {
        ConvWeights<Other> o(out_channels, in_channels, kh, kw);
        o.trainable = trainable;
        for (std::size_t i = 0; i < kernel.size(); ++i) o.kernel[i] = static_cast<Other>(kernel[i]);
        for (std::size_t i = 0; i < bias.size(); ++i) o.bias[i] = static_cast<Other>(bias[i]);
        return o;
    }
};

// Reference convolution: stride 1, "same" zero padding, naive loops.
// Ground truth for every other convolution path.
template <typename Scalar>
Tensor<Scalar> conv2d_direct(const Tensor<Scalar>& x, const ConvWeights<Scalar>& w) {
    if (x.c() != w.in_channels)
        throw std::invalid_argument("conv2d: input has " + std::to_string(x.c()) +
                                    " channels, weights expect " +
                                    std::to_string(w.in_channels));
    const int ph = w.kh / 2, pw = w.kw / 2;
    Tensor<Scalar> out(x.n(), x.h(), x.w(), w.out_channels);
    for (int n = 0; n < x.n(); ++n)
        for (int y = 0; y < x.h(); ++y)
            for (int xx = 0; xx < x.w(); ++xx)
                for (int o = 0; o < w.out_channels; ++o) {
                    Scalar acc = w.bias[static_cast<std::size_t>(o)];
                    for (int c = 0; c < w.in_channels; ++c)
                        for (int i = 0; i < w.kh; ++i) {
                            const int sy = y + i - ph;
                            if (sy < 0 || sy >= x.h()) continue;
                            for (int j = 0; j < w.kw; ++j) {
                                const int sx = xx + j - pw;
                                if (sx < 0 || sx >= x.w()) continue;
                                acc += x(n, sy, sx, c) * w.k(o, c, i, j);
                            }
                        }
                    out(n, y, xx, o) = acc;
                }
    return out;
}

// Optimized path: im2col then a single matrix product per batch element.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const ConvWeights<Scalar>& w) {
    if (x.c() != w.in_channels)
        throw std::invalid_argument("conv2d: input has " + std::to_string(x.c()) +
                                    " channels, weights expect " +
                                    std::to_string(w.in_channels));
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    const int K = w.in_channels * w.kh * w.kw;
    const int HW = x.h() * x.w();
    const int ph = w.kh / 2, pw = w.kw / 2;

    // Kernel rows follow the (c, i, j) flattening used by the column matrix.
    Mat W(w.out_channels, K);
    for (int o = 0; o < w.out_channels; ++o)
        for (int c = 0; c < w.in_channels; ++c)
            for (int i = 0; i < w.kh; ++i)
                for (int j = 0; j < w.kw; ++j)
                    W(o, (c * w.kh + i) * w.kw + j) = w.k(o, c, i, j);

    Tensor<Scalar> out(x.n(), x.h(), x.w(), w.out_channels);
    Mat col(K, HW);
    for (int n = 0; n < x.n(); ++n) {
        col.setZero();
        for (int c = 0; c < w.in_channels; ++c)
            for (int i = 0; i < w.kh; ++i)
                for (int j = 0; j < w.kw; ++j) {
                    const int row = (c * w.kh + i) * w.kw + j;
                    for (int y = 0; y < x.h(); ++y) {
                        const int sy = y + i - ph;
                        if (sy < 0 || sy >= x.h()) continue;
                        for (int xx = 0; xx < x.w(); ++xx) {
                            const int sx = xx + j - pw;
                            if (sx < 0 || sx >= x.w()) continue;
                            col(row, y * x.w() + xx) = x(n, sy, sx, c);
                        }
                    }
                }
        Mat prod = W * col;
        for (int o = 0; o < w.out_channels; ++o)
            for (int p = 0; p < HW; ++p)
                out(n, p / x.w(), p % x.w(), o) =
                    prod(o, p) + w.bias[static_cast<std::size_t>(o)];
    }
    return out;
}

// Grouped convolution with per-branch channel counts and kernel sizes:
// split, convolve each branch, concatenate in branch order.
template <typename Scalar>
Tensor<Scalar> hetero_group_conv(
    const Tensor<Scalar>& x,
    const std::vector<std::pair<int, ConvWeights<Scalar>>>& branches) {
    std::vector<int> sizes;
    sizes.reserve(branches.size());
    for (const auto& [ch, bw] : branches) {
        if (bw.in_channels != ch || bw.out_channels != ch)
            throw std::invalid_argument("hetero_group_conv: branch weights must map " +
                                        std::to_string(ch) + " -> " + std::to_string(ch) +
                                        " channels");
        sizes.push_back(ch);
    }
    auto parts = channel_split(x, sizes);
    std::vector<Tensor<Scalar>> outs;
    outs.reserve(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i)
        outs.push_back(conv2d(parts[i], branches[i].second));
    return channel_concat(outs);
}

// Sub-pixel shuffle. Depth-major over the r x r spatial offsets:
// out[n, h*r+i, w*r+j, c] = in[n, h, w, (i*r + j)*(C/r^2) + c].
template <typename Scalar>
Tensor<Scalar> depth_to_space(const Tensor<Scalar>& x, int r) {
    if (r < 1) throw std::invalid_argument("depth_to_space: block size must be >= 1");
    if (x.c() % (r * r) != 0)
        throw std::invalid_argument("depth_to_space: " + std::to_string(x.c()) +
                                    " channels not divisible by r^2=" + std::to_string(r * r));
    if (r == 1) return x;
    const int Cout = x.c() / (r * r);
    Tensor<Scalar> out(x.n(), x.h() * r, x.w() * r, Cout);
    for (int n = 0; n < x.n(); ++n)
        for (int y = 0; y < x.h(); ++y)
            for (int xx = 0; xx < x.w(); ++xx)
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < r; ++j)
                        for (int c = 0; c < Cout; ++c)
                            out(n, y * r + i, xx * r + j, c) =
                                x(n, y, xx, (i * r + j) * Cout + c);
    return out;
}

// Inverse permutation of depth_to_space (used by the backward pass).
template <typename Scalar>
Tensor<Scalar> space_to_depth(const Tensor<Scalar>& x, int r) {
    if (r < 1) throw std::invalid_argument("space_to_depth: block size must be >= 1");
    if (x.h() % r != 0 || x.w() % r != 0)
        throw std::invalid_argument("space_to_depth: spatial dims not divisible by r");
    if (r == 1) return x;
    const int Cin = x.c();
    Tensor<Scalar> out(x.n(), x.h() / r, x.w() / r, Cin * r * r);
    for (int n = 0; n < x.n(); ++n)
        for (int y = 0; y < out.h(); ++y)
            for (int xx = 0; xx < out.w(); ++xx)
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < r; ++j)
                        for (int c = 0; c < Cin; ++c)
                            out(n, y, xx, (i * r + j) * Cin + c) =
                                x(n, y * r + i, xx * r + j, c);
    return out;
}

template <typename Scalar>
Tensor<Scalar> clipped_relu(const Tensor<Scalar>& x, Scalar lo, Scalar hi) {
    if (!(lo < hi)) throw std::invalid_argument("clipped_relu: lo must be < hi");
    Tensor<Scalar> out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i)
        out.data()[static_cast<std::size_t>(i)] =
            std::min(hi, std::max(lo, x.data()[static_cast<std::size_t>(i)]));
    return out;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
    Tensor<Scalar> out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i)
        out.data()[static_cast<std::size_t>(i)] =
            std::max(Scalar(0), x.data()[static_cast<std::size_t>(i)]);
    return out;
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("add: shape mismatch " + a.shape().str() + " vs " +
                                    b.shape().str());
    Tensor<Scalar> out(a.shape());
    for (std::int64_t i = 0; i < a.size(); ++i)
        out.data()[static_cast<std::size_t>(i)] =
            a.data()[static_cast<std::size_t>(i)] + b.data()[static_cast<std::size_t>(i)];
    return out;
}

// Oracle for the fixed-kernel upsampling trick:
// out[n, y, x, c] = in[n, floor(y/r), floor(x/r), c].
template <typename Scalar>
Tensor<Scalar> nearest_upsample_reference(const Tensor<Scalar>& x, int r) {
    if (r < 1) throw std::invalid_argument("nearest_upsample_reference: factor must be >= 1");
    Tensor<Scalar> out(x.n(), x.h() * r, x.w() * r, x.c());
    for (int n = 0; n < x.n(); ++n)
        for (int y = 0; y < out.h(); ++y)
            for (int xx = 0; xx < out.w(); ++xx)
                for (int c = 0; c < x.c(); ++c)
                    out(n, y, xx, c) = x(n, y / r, xx / r, c);
    return out;
}

}  // namespace xcat
