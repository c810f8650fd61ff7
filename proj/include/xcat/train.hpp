#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "xcat/metrics.hpp"
#include "xcat/model.hpp"

namespace xcat {

enum class LossKind { charbonnier, mse };

struct TrainConfig {
    int stage = 1;
    LossKind loss = LossKind::charbonnier;
    double charbonnier_eps = 0.1;
    int epochs = 50;
    int minibatches_per_epoch = 10000;
    int batch_size = 16;
    double lr_init = 1e-3;
    double lr_peak = 2.5e-3;
    double lr_final = 1e-4;
    int warmup_epochs = 5;
    std::uint64_t seed = 0;
    int crop_hr = 96;
    std::vector<double> intensity_set = {1.0, 0.7, 0.5};

    static TrainConfig stage_one() { return TrainConfig{}; }

    static TrainConfig stage_two() {
        TrainConfig cfg;
        cfg.stage = 2;
        cfg.loss = LossKind::mse;
        cfg.lr_init = 1e-4;
        cfg.lr_peak = 1.25e-3;
        cfg.lr_final = 1e-4;
        return cfg;
    }
};

// Linear warm-up to lr_peak at warmup_epochs, then linear decay to lr_final
// at the last epoch. Epochs are 1-based.
inline double lr_schedule(const TrainConfig& cfg, int epoch) {
    if (epoch < 1 || epoch > cfg.epochs)
        throw std::invalid_argument("lr_schedule: epoch " + std::to_string(epoch) +
                                    " outside [1, " + std::to_string(cfg.epochs) + "]");
    const int wu = cfg.warmup_epochs;
    if (epoch <= wu) {
        if (wu <= 1) return cfg.lr_peak;
        const double t = static_cast<double>(epoch - 1) / (wu - 1);
        return cfg.lr_init + (cfg.lr_peak - cfg.lr_init) * t;
    }
    if (cfg.epochs <= wu) return cfg.lr_peak;
    const double t = static_cast<double>(epoch - wu) / (cfg.epochs - wu);
    return cfg.lr_peak + (cfg.lr_final - cfg.lr_peak) * t;
}

template <typename Scalar>
struct LossResult {
    double loss = 0.0;
    Tensor<Scalar> grad;
};

// C(d) = sqrt(d^2 + eps^2), averaged over elements.
template <typename Scalar>
LossResult<Scalar> charbonnier_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& target,
                                    double eps) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("charbonnier_loss: shape mismatch");
    if (!(eps > 0.0)) throw std::invalid_argument("charbonnier_loss: eps must be > 0");
    LossResult<Scalar> res;
    res.grad = Tensor<Scalar>(pred.shape());
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    double sum = 0.0;
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred.data()[static_cast<std::size_t>(i)]) -
                         static_cast<double>(target.data()[static_cast<std::size_t>(i)]);
        const double c = std::sqrt(d * d + eps * eps);
        sum += c;
        res.grad.data()[static_cast<std::size_t>(i)] = static_cast<Scalar>(d / c * inv_n);
    }
    res.loss = sum * inv_n;
    return res;
}

template <typename Scalar>
LossResult<Scalar> mse_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& target) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("mse_loss: shape mismatch");
    LossResult<Scalar> res;
    res.grad = Tensor<Scalar>(pred.shape());
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    double sum = 0.0;
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred.data()[static_cast<std::size_t>(i)]) -
                         static_cast<double>(target.data()[static_cast<std::size_t>(i)]);
        sum += d * d;
        res.grad.data()[static_cast<std::size_t>(i)] = static_cast<Scalar>(2.0 * d * inv_n);
    }
    res.loss = sum * inv_n;
    return res;
}

// Reverse-mode convolution: gradients w.r.t. input, kernel and bias.
template <typename Scalar>
void conv2d_backward(const Tensor<Scalar>& x, const ConvWeights<Scalar>& w,
                     const Tensor<Scalar>& g, Tensor<Scalar>& gx, ConvWeights<Scalar>& gw) {
    gx = Tensor<Scalar>(x.shape());
    const int ph = w.kh / 2, pw = w.kw / 2;
    for (int n = 0; n < x.n(); ++n)
        for (int y = 0; y < x.h(); ++y)
            for (int xx = 0; xx < x.w(); ++xx)
                for (int o = 0; o < w.out_channels; ++o) {
                    const Scalar go = g(n, y, xx, o);
                    if (go == Scalar(0)) continue;
                    gw.bias[static_cast<std::size_t>(o)] += go;
                    for (int c = 0; c < w.in_channels; ++c)
                        for (int i = 0; i < w.kh; ++i) {
                            const int sy = y + i - ph;
                            if (sy < 0 || sy >= x.h()) continue;
                            for (int j = 0; j < w.kw; ++j) {
                                const int sx = xx + j - pw;
                                if (sx < 0 || sx >= x.w()) continue;
                                gw.k(o, c, i, j) += x(n, sy, sx, c) * go;
                                gx(n, sy, sx, c) += w.k(o, c, i, j) * go;
                            }
                        }
                }
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& pre, const Tensor<Scalar>& g) {
    Tensor<Scalar> out(g.shape());
    for (std::int64_t i = 0; i < g.size(); ++i)
        out.data()[static_cast<std::size_t>(i)] =
            pre.data()[static_cast<std::size_t>(i)] > Scalar(0)
                ? g.data()[static_cast<std::size_t>(i)]
                : Scalar(0);
    return out;
}

template <typename Scalar>
Tensor<Scalar> clipped_relu_backward(const Tensor<Scalar>& pre, const Tensor<Scalar>& g,
                                     Scalar lo, Scalar hi) {
    Tensor<Scalar> out(g.shape());
    for (std::int64_t i = 0; i < g.size(); ++i) {
        const Scalar v = pre.data()[static_cast<std::size_t>(i)];
        out.data()[static_cast<std::size_t>(i)] =
            (v > lo && v < hi) ? g.data()[static_cast<std::size_t>(i)] : Scalar(0);
    }
    return out;
}

// Gradient holder with the same layer structure as the model.
template <typename Scalar>
Model<Scalar> zero_like(const Model<Scalar>& m) {
    Model<Scalar> g = m;
    for (auto* w : g.layers()) {
        std::fill(w->kernel.begin(), w->kernel.end(), Scalar(0));
        std::fill(w->bias.begin(), w->bias.end(), Scalar(0));
    }
    return g;
}

template <typename Scalar>
struct BackwardResult {
    Model<Scalar> grads;       // kernel/bias arrays hold the gradients
    Tensor<Scalar> input_grad;
};

// Reverse pass over the whole pipeline. The fixed upsample kernel passes the
// input gradient through but accumulates no weight gradient.
template <typename Scalar>
BackwardResult<Scalar> backward(const Model<Scalar>& m, const ForwardCache<Scalar>& cache,
                                const Tensor<Scalar>& grad_out) {
    const auto& cfg = m.config;
    if (!grad_out.same_shape(cache.output))
        throw std::runtime_error("backward: grad_out does not match cached output shape");
    if (cache.blocks.size() != static_cast<std::size_t>(cfg.m))
        throw std::runtime_error("backward: cache does not match model");

    BackwardResult<Scalar> res;
    res.grads = zero_like(m);
    auto& gm = res.grads;
    const bool act = cfg.hidden_activation;

    Tensor<Scalar> g = clipped_relu_backward(cache.d2s_out, grad_out, Scalar(0), Scalar(1));
    g = space_to_depth(g, cfg.scale);

    Tensor<Scalar> g_feature, g_fixed_out, g_input_fixed;
    if (cfg.merge_mode == MergeMode::add) {
        g_fixed_out = g;
        conv2d_backward(cache.conv_out_in, m.conv_out, g, g_feature, gm.conv_out);
    } else {
        Tensor<Scalar> g_cat;
        conv2d_backward(cache.conv_out_in, m.conv_out, g, g_cat, gm.conv_out);
        const int feat_c = cache.feature.c();
        auto parts = channel_split(g_cat, {feat_c, cache.fixed_out.c()});
        g_feature = std::move(parts[0]);
        g_fixed_out = std::move(parts[1]);
    }
    {
        ConvWeights<Scalar> scratch(m.fixed_upsample.out_channels,
                                    m.fixed_upsample.in_channels, m.fixed_upsample.kh,
                                    m.fixed_upsample.kw);
        conv2d_backward(cache.input, m.fixed_upsample, g_fixed_out, g_input_fixed, scratch);
        // scratch discarded: non-trainable weights receive no gradient.
    }

    if (cfg.post_block_conv != PostBlockConv::none) {
        Tensor<Scalar> g_in;
        conv2d_backward(cache.blocks.back().out, m.post_conv, g_feature, g_in, gm.post_conv);
        g = std::move(g_in);
    } else {
        g = std::move(g_feature);
    }

    for (int b = cfg.m - 1; b >= 0; --b) {
        const auto& bc = cache.blocks[static_cast<std::size_t>(b)];
        const auto& blk = m.blocks[static_cast<std::size_t>(b)];
        auto& gblk = gm.blocks[static_cast<std::size_t>(b)];
        if (cfg.block_kind == BlockKind::plain_conv3x3) {
            Tensor<Scalar> gp = act ? relu_backward(bc.b0_pre, g) : g;
            Tensor<Scalar> g_in;
            conv2d_backward(bc.in, blk.plain, gp, g_in, gblk.plain);
            g = std::move(g_in);
        } else {
            Tensor<Scalar> g_cat;
            switch (cfg.mix_mode) {
                case MixMode::cross_concat:
                    g_cat = channel_rotate(g, -cfg.rotate_amount());
                    break;
                case MixMode::straight_concat:
                    g_cat = g;
                    break;
                case MixMode::conv1x1:
                    conv2d_backward(bc.concat_out, blk.mix, g, g_cat, gblk.mix);
                    break;
            }
            auto gparts = channel_split(g_cat, {cfg.split_x, cfg.split_y});
            Tensor<Scalar> g0 = act ? relu_backward(bc.b0_pre, gparts[0]) : gparts[0];
            Tensor<Scalar> g1 = act ? relu_backward(bc.b1_pre, gparts[1]) : gparts[1];
            Tensor<Scalar> g0_in, g1_in;
            conv2d_backward(bc.b0_in, blk.branch0, g0, g0_in, gblk.branch0);
            conv2d_backward(bc.b1_in, blk.branch1, g1, g1_in, gblk.branch1);
            g = channel_concat<Scalar>({g0_in, g1_in});
        }
    }

    if (act) g = relu_backward(cache.conv_in_pre, g);
    Tensor<Scalar> g_input;
    conv2d_backward(cache.input, m.conv_in, g, g_input, gm.conv_in);
    res.input_grad = add(g_input, g_input_fixed);
    return res;
}

template <typename Scalar>
void accumulate(Model<Scalar>& into, const Model<Scalar>& grads) {
    auto dst = into.layers();
    auto src = grads.layers();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        for (std::size_t k = 0; k < dst[i]->kernel.size(); ++k)
            dst[i]->kernel[k] += src[i]->kernel[k];
        for (std::size_t k = 0; k < dst[i]->bias.size(); ++k)
            dst[i]->bias[k] += src[i]->bias[k];
    }
}

template <typename Scalar>
void scale_grads(Model<Scalar>& g, double s) {
    for (auto* w : g.layers()) {
        for (auto& v : w->kernel) v = static_cast<Scalar>(v * s);
        for (auto& v : w->bias) v = static_cast<Scalar>(v * s);
    }
}

// Adam optimizer state: moments only for trainable layers, in layer order.
struct TrainState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<std::vector<double>> m_kernel, v_kernel, m_bias, v_bias;
};

template <typename Scalar>
TrainState init_train_state(const Model<Scalar>& model) {
    TrainState st;
    for (const auto* w : model.layers()) {
        const std::size_t nk = w->trainable ? w->kernel.size() : 0;
        const std::size_t nb = w->trainable ? w->bias.size() : 0;
        st.m_kernel.emplace_back(nk, 0.0);
        st.v_kernel.emplace_back(nk, 0.0);
        st.m_bias.emplace_back(nb, 0.0);
        st.v_bias.emplace_back(nb, 0.0);
    }
    return st;
}

// Bias-corrected Adam update; non-trainable layers are untouched.
template <typename Scalar>
void adam_step(Model<Scalar>& model, TrainState& st, const Model<Scalar>& grads, double lr) {
    auto params = model.layers();
    auto gs = grads.layers();
    if (st.m_kernel.size() != params.size())
        throw std::runtime_error("adam_step: state does not match model");
    ++st.step;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));

    auto update = [&](std::vector<Scalar>& p, const std::vector<Scalar>& g,
                      std::vector<double>& m, std::vector<double>& v) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * gi;
            v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * gi * gi;
            const double mh = m[i] / bc1;
            const double vh = v[i] / bc2;
            p[i] = static_cast<Scalar>(static_cast<double>(p[i]) -
                                       lr * mh / (std::sqrt(vh) + st.eps));
        }
    };

    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->trainable) continue;
        update(params[i]->kernel, gs[i]->kernel, st.m_kernel[i], st.v_kernel[i]);
        update(params[i]->bias, gs[i]->bias, st.m_bias[i], st.v_bias[i]);
    }
}

// Random aligned crop + rotation + flips + intensity scaling. Both patches
// get identical geometric and intensity treatment.
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> augment(const Tensor<Scalar>& lr_img,
                                                  const Tensor<Scalar>& hr_img, int scale,
                                                  int crop_hr,
                                                  const std::vector<double>& intensity_set,
                                                  std::mt19937_64& rng) {
    if (crop_hr % scale != 0)
        throw std::invalid_argument("augment: crop_hr must be divisible by scale");
    if (hr_img.h() != lr_img.h() * scale || hr_img.w() != lr_img.w() * scale)
        throw std::invalid_argument("augment: HR dimensions must be scale * LR dimensions");
    const int crop_lr = crop_hr / scale;
    if (lr_img.h() < crop_lr || lr_img.w() < crop_lr)
        throw std::invalid_argument("augment: image smaller than crop size");

    std::uniform_int_distribution<int> dy(0, lr_img.h() - crop_lr);
    std::uniform_int_distribution<int> dx(0, lr_img.w() - crop_lr);
    const int ly = dy(rng), lx = dx(rng);
    Tensor<Scalar> lp = crop(lr_img, ly, lx, crop_lr, crop_lr);
    Tensor<Scalar> hp = crop(hr_img, ly * scale, lx * scale, crop_hr, crop_hr);

    std::uniform_int_distribution<int> rot(0, 3);
    const int k = rot(rng);
    for (int i = 0; i < k; ++i) {
        lp = rotate90(lp);
        hp = rotate90(hp);
    }
    std::bernoulli_distribution coin(0.5);
    if (coin(rng)) {
        lp = flip_horizontal(lp);
        hp = flip_horizontal(hp);
    }
    if (coin(rng)) {
        lp = flip_vertical(lp);
        hp = flip_vertical(hp);
    }
    if (!intensity_set.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, intensity_set.size() - 1);
        const double f = intensity_set[pick(rng)];
        for (auto& v : lp.data()) v = static_cast<Scalar>(v * f);
        for (auto& v : hp.data()) v = static_cast<Scalar>(v * f);
    }
    return {std::move(lp), std::move(hp)};
}

// Convenience overload: derive the LR image by bicubic degradation first.
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> augment(const Tensor<Scalar>& hr_img, int scale,
                                                  int crop_hr,
                                                  const std::vector<double>& intensity_set,
                                                  std::mt19937_64& rng) {
    return augment(bicubic_downsample(hr_img, scale), hr_img, scale, crop_hr, intensity_set,
                   rng);
}

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
    double seconds = 0.0;
};

// Single-threaded deterministic training loop over (lr, hr) image pairs.
template <typename Scalar>
std::vector<EpochLog> train(Model<Scalar>& model, const TrainConfig& cfg,
                            const std::vector<std::pair<Tensor<Scalar>, Tensor<Scalar>>>& data) {
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    std::mt19937_64 rng(cfg.seed);
    TrainState st = init_train_state(model);
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    const int scale = model.config.scale;
    const int crop_lr = cfg.crop_hr / scale;

    std::vector<EpochLog> log;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = lr_schedule(cfg, epoch);
        double loss_sum = 0.0;
        for (int mb = 0; mb < cfg.minibatches_per_epoch; ++mb) {
            // Assemble the minibatch as a single batched tensor.
            Tensor<Scalar> blr(cfg.batch_size, crop_lr, crop_lr, model.config.image_channels);
            Tensor<Scalar> bhr(cfg.batch_size, cfg.crop_hr, cfg.crop_hr,
                               model.config.image_channels);
            for (int s = 0; s < cfg.batch_size; ++s) {
                const auto& [lr_img, hr_img] = data[pick(rng)];
                auto [lp, hp] = augment(lr_img, hr_img, scale, cfg.crop_hr,
                                        cfg.intensity_set, rng);
                for (int y = 0; y < crop_lr; ++y)
                    for (int x = 0; x < crop_lr; ++x)
                        for (int c = 0; c < lp.c(); ++c)
                            blr(s, y, x, c) = lp(0, y, x, c);
                for (int y = 0; y < cfg.crop_hr; ++y)
                    for (int x = 0; x < cfg.crop_hr; ++x)
                        for (int c = 0; c < hp.c(); ++c)
                            bhr(s, y, x, c) = hp(0, y, x, c);
            }

            ForwardCache<Scalar> cache;
            const Tensor<Scalar> pred = forward(model, blr, &cache);
            LossResult<Scalar> lres =
                cfg.loss == LossKind::charbonnier
                    ? charbonnier_loss(pred, bhr, cfg.charbonnier_eps)
                    : mse_loss(pred, bhr);
            loss_sum += lres.loss;

            auto back = backward(model, cache, lres.grad);
            adam_step(model, st, back.grads, lr);
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.push_back({epoch, lr, loss_sum / cfg.minibatches_per_epoch, secs});
    }
    return log;
}

}  // namespace xcat
