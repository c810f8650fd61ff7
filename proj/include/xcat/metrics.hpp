#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "xcat/tensor.hpp"

namespace xcat {

struct ImagePair {
    Tensor<float> lr;  // (1, h, w, 3), values in [0,1]
    Tensor<float> hr;  // (1, 3h, 3w, 3)
    std::string id;
};

// Keys cubic interpolation kernel, a = -0.5.
inline double cubic_kernel(double x) {
    const double a = -0.5;
    x = std::fabs(x);
    if (x <= 1.0) return (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0;
    if (x < 2.0) return a * (x * x * x - 5.0 * x * x + 8.0 * x - 4.0);
    return 0.0;
}

// Anti-aliased bicubic decimation: the Keys kernel stretched by the factor,
// clamp-to-edge, sampled at the block centers, output clipped to [0,1].
template <typename Scalar>
Tensor<Scalar> bicubic_downsample(const Tensor<Scalar>& hr, int factor) {
    if (factor < 1) throw std::invalid_argument("bicubic_downsample: factor must be >= 1");
    if (hr.h() % factor != 0 || hr.w() % factor != 0)
        throw std::invalid_argument("bicubic_downsample: dimensions " +
                                    std::to_string(hr.h()) + "x" + std::to_string(hr.w()) +
                                    " not divisible by " + std::to_string(factor));
    if (factor == 1) return hr;

    const int radius = 2 * factor;
    auto make_taps = [&](int out_size, int in_size) {
        // taps[i] = (first source index, weights...)
        std::vector<std::pair<int, std::vector<double>>> taps(static_cast<std::size_t>(out_size));
        for (int i = 0; i < out_size; ++i) {
            const double center = (i + 0.5) * factor - 0.5;
            const int s0 = static_cast<int>(std::ceil(center)) - radius + 1;
            std::vector<double> w;
            double sum = 0.0;
            for (int s = s0; s < s0 + 2 * radius; ++s) {
                const double v = cubic_kernel((s - center) / factor) / factor;
                w.push_back(v);
                sum += v;
            }
            for (auto& v : w) v /= sum;
            taps[static_cast<std::size_t>(i)] = {s0, std::move(w)};
        }
        return taps;
    };

    const int oh = hr.h() / factor, ow = hr.w() / factor;
    const auto row_taps = make_taps(oh, hr.h());
    const auto col_taps = make_taps(ow, hr.w());

    // Horizontal pass, then vertical, accumulating in double.
    Tensor<double> tmp(hr.n(), hr.h(), ow, hr.c());
    for (int n = 0; n < hr.n(); ++n)
        for (int y = 0; y < hr.h(); ++y)
            for (int x = 0; x < ow; ++x) {
                const auto& [s0, w] = col_taps[static_cast<std::size_t>(x)];
                for (int c = 0; c < hr.c(); ++c) {
                    double acc = 0.0;
                    for (std::size_t t = 0; t < w.size(); ++t) {
                        const int sx = std::clamp(s0 + static_cast<int>(t), 0, hr.w() - 1);
                        acc += w[t] * static_cast<double>(hr(n, y, sx, c));
                    }
                    tmp(n, y, x, c) = acc;
                }
            }

    Tensor<Scalar> out(hr.n(), oh, ow, hr.c());
    for (int n = 0; n < hr.n(); ++n)
        for (int y = 0; y < oh; ++y) {
            const auto& [s0, w] = row_taps[static_cast<std::size_t>(y)];
            for (int x = 0; x < ow; ++x)
                for (int c = 0; c < hr.c(); ++c) {
                    double acc = 0.0;
                    for (std::size_t t = 0; t < w.size(); ++t) {
                        const int sy = std::clamp(s0 + static_cast<int>(t), 0, hr.h() - 1);
                        acc += w[t] * tmp(n, sy, x, c);
                    }
                    out(n, y, x, c) = static_cast<Scalar>(std::clamp(acc, 0.0, 1.0));
                }
        }
    return out;
}

// Bicubic upsampling (kernel unstretched); used as a quality baseline.
template <typename Scalar>
Tensor<Scalar> bicubic_upsample(const Tensor<Scalar>& lr, int factor) {
    if (factor < 1) throw std::invalid_argument("bicubic_upsample: factor must be >= 1");
    if (factor == 1) return lr;
    Tensor<Scalar> out(lr.n(), lr.h() * factor, lr.w() * factor, lr.c());
    for (int n = 0; n < lr.n(); ++n)
        for (int y = 0; y < out.h(); ++y) {
            const double cy = (y + 0.5) / factor - 0.5;
            const int y0 = static_cast<int>(std::floor(cy)) - 1;
            for (int x = 0; x < out.w(); ++x) {
                const double cx = (x + 0.5) / factor - 0.5;
                const int x0 = static_cast<int>(std::floor(cx)) - 1;
                for (int c = 0; c < lr.c(); ++c) {
                    double acc = 0.0;
                    for (int i = 0; i < 4; ++i) {
                        const int sy = std::clamp(y0 + i, 0, lr.h() - 1);
                        const double wy = cubic_kernel(y0 + i - cy);
                        for (int j = 0; j < 4; ++j) {
                            const int sx = std::clamp(x0 + j, 0, lr.w() - 1);
                            acc += wy * cubic_kernel(x0 + j - cx) *
                                   static_cast<double>(lr(n, sy, sx, c));
                        }
                    }
                    out(n, y, x, c) = static_cast<Scalar>(std::clamp(acc, 0.0, 1.0));
                }
            }
        }
    return out;
}

enum class PsnrMode { rgb, y };

// BT.601 studio-swing luminance from [0,1] RGB, result in [16/255, 235/255].
inline double luminance_y(double r, double g, double b) {
    return (65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0;
}

// PSNR in dB over [0,1] images; nullopt signals identical inputs
// (infinite PSNR), kept distinct from any numeric result.
template <typename Scalar>
std::optional<double> psnr(const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                           PsnrMode mode = PsnrMode::rgb) {
    if (!a.same_shape(b))
        throw std::invalid_argument("psnr: shape mismatch " + a.shape().str() + " vs " +
                                    b.shape().str());
    double se = 0.0;
    std::int64_t count = 0;
    if (mode == PsnrMode::rgb) {
        for (std::int64_t i = 0; i < a.size(); ++i) {
            const double d = static_cast<double>(a.data()[static_cast<std::size_t>(i)]) -
                             static_cast<double>(b.data()[static_cast<std::size_t>(i)]);
            se += d * d;
        }
        count = a.size();
    } else {
        if (a.c() != 3) throw std::invalid_argument("psnr: Y mode needs 3 channels");
        for (int n = 0; n < a.n(); ++n)
            for (int y = 0; y < a.h(); ++y)
                for (int x = 0; x < a.w(); ++x) {
                    const double ya = luminance_y(a(n, y, x, 0), a(n, y, x, 1), a(n, y, x, 2));
                    const double yb = luminance_y(b(n, y, x, 0), b(n, y, x, 1), b(n, y, x, 2));
                    se += (ya - yb) * (ya - yb);
                    ++count;
                }
    }
    const double mse = se / static_cast<double>(count);
    if (mse == 0.0) return std::nullopt;
    return 10.0 * std::log10(1.0 / mse);
}

// Challenge metric: 2^(2*(PSNR-30)) / (t * 1e-5), t in milliseconds.
inline double challenge_score(double psnr_uint8_db, double runtime_ms) {
    if (!(runtime_ms > 0.0))
        throw std::invalid_argument("challenge_score: runtime must be positive");
    return std::exp2(2.0 * (psnr_uint8_db - 30.0)) / (runtime_ms * 1e-5);
}

}  // namespace xcat
