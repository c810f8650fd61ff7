#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "xcat/nn_ops.hpp"
#include "xcat/tensor.hpp"

namespace xcat {

enum class MixMode : std::uint8_t { cross_concat = 0, straight_concat = 1, conv1x1 = 2 };
enum class RotateDirection : std::uint8_t { forward = 0, backward = 1 };
enum class BlockKind : std::uint8_t { hxblock = 0, plain_conv3x3 = 1 };
enum class PostBlockConv : std::uint8_t { conv3x3 = 0, conv1x1 = 1, none = 2 };
enum class MergeMode : std::uint8_t { add = 0, concat = 1 };

struct XcatConfig {
    int m = 2;                  // number of blocks
    int split_x = 21;           // channels through the k0 branch
    int split_y = 7;            // channels through the k1 branch
    int k0 = 1;
    int k1 = 3;
    MixMode mix_mode = MixMode::cross_concat;
    RotateDirection rotate_direction = RotateDirection::forward;
    BlockKind block_kind = BlockKind::hxblock;
    PostBlockConv post_block_conv = PostBlockConv::conv3x3;
    MergeMode merge_mode = MergeMode::add;
    int scale = 3;
    int image_channels = 3;
    bool hidden_activation = true;  // ReLU after conv_in and branch convs

    int feature_channels() const { return split_x + split_y; }
    int out_channels_before_d2s() const { return image_channels * scale * scale; }

    // Signed quarter-channel rotation applied by cross concatenation.
    int rotate_amount() const {
        const int q = feature_channels() / 4;
        return rotate_direction == RotateDirection::forward ? q : -q;
    }

    void validate() const {
        if (m < 1) throw std::invalid_argument("config: m must be >= 1");
        if (split_x < 1 || split_y < 1)
            throw std::invalid_argument("config: split channels must be >= 1");
        if ((k0 != 1 && k0 != 3) || (k1 != 1 && k1 != 3))
            throw std::invalid_argument("config: branch kernels must be 1 or 3");
        if (scale < 1) throw std::invalid_argument("config: scale must be >= 1");
        if (image_channels < 1)
            throw std::invalid_argument("config: image_channels must be >= 1");
        if (mix_mode == MixMode::cross_concat && feature_channels() % 4 != 0)
            throw std::invalid_argument(
                "config: cross_concat needs feature_channels divisible by 4, got " +
                std::to_string(feature_channels()));
    }
};

enum class LayerTag : std::uint8_t {
    conv_in = 0,
    branch0 = 1,
    branch1 = 2,
    mix_conv = 3,
    plain_block = 4,
    post_conv = 5,
    conv_out = 6,
    fixed_upsample = 7,
};

struct LayerSpec {
    LayerTag tag;
    int out, in, kh, kw;
    bool trainable;
};

// Channel plan shared by the builder and the param/MAC accounting.
inline std::vector<LayerSpec> layer_plan(const XcatConfig& cfg) {
    cfg.validate();
    const int F = cfg.feature_channels();
    const int D = cfg.out_channels_before_d2s();
    const bool concat_merge = cfg.merge_mode == MergeMode::concat;

    std::vector<LayerSpec> plan;
    plan.push_back({LayerTag::conv_in, F, cfg.image_channels, 3, 3, true});
    for (int b = 0; b < cfg.m; ++b) {
        if (cfg.block_kind == BlockKind::plain_conv3x3) {
            plan.push_back({LayerTag::plain_block, F, F, 3, 3, true});
        } else {
            plan.push_back({LayerTag::branch0, cfg.split_x, cfg.split_x, cfg.k0, cfg.k0, true});
            plan.push_back({LayerTag::branch1, cfg.split_y, cfg.split_y, cfg.k1, cfg.k1, true});
            if (cfg.mix_mode == MixMode::conv1x1)
                plan.push_back({LayerTag::mix_conv, F, F, 1, 1, true});
        }
    }
    // In concat-merge mode the feature branch must arrive at D channels before
    // the merge and conv_out maps the merged tensor back down to D.
    int feature_out = F;
    if (cfg.post_block_conv != PostBlockConv::none) {
        const int k = cfg.post_block_conv == PostBlockConv::conv3x3 ? 3 : 1;
        feature_out = concat_merge ? D : F;
        plan.push_back({LayerTag::post_conv, feature_out, F, k, k, true});
    }
    const int conv_out_in = concat_merge ? feature_out + D : feature_out;
    plan.push_back({LayerTag::conv_out, D, conv_out_in, 3, 3, true});
    plan.push_back({LayerTag::fixed_upsample, D, cfg.image_channels, 1, 1, false});
    return plan;
}

// 1x1 kernel that replicates each input channel scale^2 times so that a
// following depth_to_space(scale) yields exact nearest-neighbor upsampling.
template <typename Scalar>
ConvWeights<Scalar> make_fixed_upsample_kernel(int image_channels, int scale) {
    if (image_channels < 1 || scale < 1)
        throw std::invalid_argument("make_fixed_upsample_kernel: bad arguments");
    ConvWeights<Scalar> w(image_channels * scale * scale, image_channels, 1, 1);
    w.trainable = false;
    for (int o = 0; o < w.out_channels; ++o)
        w.k(o, o % image_channels, 0, 0) = Scalar(1);
    return w;
}

template <typename Scalar>
struct HxBlockWeights {
    ConvWeights<Scalar> branch0;
    ConvWeights<Scalar> branch1;
    ConvWeights<Scalar> mix;    // mix_mode == conv1x1 only
    ConvWeights<Scalar> plain;  // block_kind == plain_conv3x3 only
};

template <typename Scalar>
struct Model {
    XcatConfig config;
    ConvWeights<Scalar> conv_in;
    std::vector<HxBlockWeights<Scalar>> blocks;
    ConvWeights<Scalar> post_conv;  // unused when post_block_conv == none
    ConvWeights<Scalar> conv_out;
    ConvWeights<Scalar> fixed_upsample;

    // Layers in the canonical plan order.
    std::vector<const ConvWeights<Scalar>*> layers() const {
        std::vector<const ConvWeights<Scalar>*> out;
        collect(*this, out);
        return out;
    }
    std::vector<ConvWeights<Scalar>*> layers() {
        std::vector<ConvWeights<Scalar>*> out;
        collect(*this, out);
        return out;
    }

    template <typename Other>
    Model<Other> cast() const {
        Model<Other> m;
        m.config = config;
        m.conv_in = conv_in.template cast<Other>();
        for (const auto& b : blocks) {
            HxBlockWeights<Other> nb;
            nb.branch0 = b.branch0.template cast<Other>();
            nb.branch1 = b.branch1.template cast<Other>();
            nb.mix = b.mix.template cast<Other>();
            nb.plain = b.plain.template cast<Other>();
            m.blocks.push_back(std::move(nb));
        }
        m.post_conv = post_conv.template cast<Other>();
        m.conv_out = conv_out.template cast<Other>();
        m.fixed_upsample = fixed_upsample.template cast<Other>();
        return m;
    }

private:
    template <typename M, typename P>
    static void collect(M& m, std::vector<P>& out) {
        const auto& cfg = m.config;
        out.push_back(&m.conv_in);
        for (auto& b : m.blocks) {
            if (cfg.block_kind == BlockKind::plain_conv3x3) {
                out.push_back(&b.plain);
            } else {
                out.push_back(&b.branch0);
                out.push_back(&b.branch1);
                if (cfg.mix_mode == MixMode::conv1x1) out.push_back(&b.mix);
            }
        }
        if (cfg.post_block_conv != PostBlockConv::none) out.push_back(&m.post_conv);
        out.push_back(&m.conv_out);
        out.push_back(&m.fixed_upsample);
    }
};

using ModelF = Model<float>;
using ModelD = Model<double>;

// Deterministic builder: uniform fan-in scaled init for trainable kernels,
// zero biases, identity-replication fixed kernel.
template <typename Scalar>
Model<Scalar> build(const XcatConfig& cfg, std::uint64_t seed) {
    const auto plan = layer_plan(cfg);
    std::mt19937_64 rng(seed);

    Model<Scalar> m;
    m.config = cfg;
    m.blocks.resize(static_cast<std::size_t>(cfg.m));

    std::size_t block_idx = 0;
    for (const auto& spec : plan) {
        ConvWeights<Scalar> w(spec.out, spec.in, spec.kh, spec.kw);
        w.trainable = spec.trainable;
        if (spec.trainable) {
            const double fan_in = static_cast<double>(spec.in) * spec.kh * spec.kw;
            const double limit = std::sqrt(6.0 / fan_in);
            std::uniform_real_distribution<double> dist(-limit, limit);
            for (auto& v : w.kernel) v = static_cast<Scalar>(dist(rng));
        }
        switch (spec.tag) {
            case LayerTag::conv_in: m.conv_in = std::move(w); break;
            case LayerTag::branch0: m.blocks[block_idx].branch0 = std::move(w); break;
            case LayerTag::branch1: m.blocks[block_idx].branch1 = std::move(w); break;
            case LayerTag::mix_conv:
                m.blocks[block_idx].mix = std::move(w);
                ++block_idx;
                break;
            case LayerTag::plain_block:
                m.blocks[block_idx].plain = std::move(w);
                ++block_idx;
                break;
            case LayerTag::post_conv: m.post_conv = std::move(w); break;
            case LayerTag::conv_out: m.conv_out = std::move(w); break;
            case LayerTag::fixed_upsample:
                m.fixed_upsample = make_fixed_upsample_kernel<Scalar>(cfg.image_channels,
                                                                      cfg.scale);
                break;
        }
        if (cfg.block_kind == BlockKind::hxblock && cfg.mix_mode != MixMode::conv1x1 &&
            spec.tag == LayerTag::branch1)
            ++block_idx;
    }
    return m;
}

template <typename Scalar>
struct BlockCache {
    Tensor<Scalar> in;
    Tensor<Scalar> b0_in, b1_in;
    Tensor<Scalar> b0_pre, b1_pre;
    Tensor<Scalar> b0_act, b1_act;
    Tensor<Scalar> concat_out;  // before rotate / mix conv
    Tensor<Scalar> out;
};

template <typename Scalar>
struct ForwardCache {
    Tensor<Scalar> input;
    Tensor<Scalar> conv_in_pre, conv_in_act;
    std::vector<BlockCache<Scalar>> blocks;
    Tensor<Scalar> feature;      // feature branch right before the merge stage
    Tensor<Scalar> conv_out_in;
    Tensor<Scalar> conv_out_out;
    Tensor<Scalar> fixed_out;
    Tensor<Scalar> merged;       // tensor entering depth_to_space
    Tensor<Scalar> d2s_out;      // before the final clipped ReLU
    Tensor<Scalar> output;
};

template <typename Scalar>
Tensor<Scalar> forward(const Model<Scalar>& m, const Tensor<Scalar>& lr,
                       ForwardCache<Scalar>* cache = nullptr) {
    const auto& cfg = m.config;
    if (lr.c() != cfg.image_channels)
        throw std::invalid_argument("forward: expected " + std::to_string(cfg.image_channels) +
                                    " input channels, got " + std::to_string(lr.c()));
    const bool act = cfg.hidden_activation;

    if (cache) {
        cache->input = lr;
        cache->blocks.clear();
    }

    Tensor<Scalar> x = conv2d(lr, m.conv_in);
    if (cache) cache->conv_in_pre = x;
    if (act) x = relu(x);
    if (cache) cache->conv_in_act = x;

    for (const auto& blk : m.blocks) {
        BlockCache<Scalar> bc;
        if (cache) bc.in = x;
        if (cfg.block_kind == BlockKind::plain_conv3x3) {
            Tensor<Scalar> pre = conv2d(x, blk.plain);
            if (cache) bc.b0_pre = pre;
            x = act ? relu(pre) : pre;
        } else {
            auto parts = channel_split(x, {cfg.split_x, cfg.split_y});
            Tensor<Scalar> p0 = conv2d(parts[0], blk.branch0);
            Tensor<Scalar> p1 = conv2d(parts[1], blk.branch1);
            if (cache) {
                bc.b0_in = parts[0];
                bc.b1_in = parts[1];
                bc.b0_pre = p0;
                bc.b1_pre = p1;
            }
            if (act) {
                p0 = relu(p0);
                p1 = relu(p1);
            }
            if (cache) {
                bc.b0_act = p0;
                bc.b1_act = p1;
            }
            Tensor<Scalar> cat = channel_concat<Scalar>({p0, p1});
            if (cache) bc.concat_out = cat;
            switch (cfg.mix_mode) {
                case MixMode::cross_concat:
                    x = channel_rotate(cat, cfg.rotate_amount());
                    break;
                case MixMode::straight_concat:
                    x = std::move(cat);
                    break;
                case MixMode::conv1x1:
                    x = conv2d(cat, blk.mix);
                    break;
            }
        }
        if (cache) {
            bc.out = x;
            cache->blocks.push_back(std::move(bc));
        }
    }

    if (cfg.post_block_conv != PostBlockConv::none) x = conv2d(x, m.post_conv);
    if (cache) cache->feature = x;

    Tensor<Scalar> fixed = conv2d(lr, m.fixed_upsample);
    if (cache) cache->fixed_out = fixed;

    Tensor<Scalar> merged;
    if (cfg.merge_mode == MergeMode::add) {
        Tensor<Scalar> f = conv2d(x, m.conv_out);
        if (cache) {
            cache->conv_out_in = x;
            cache->conv_out_out = f;
        }
        merged = add(f, fixed);
    } else {
        Tensor<Scalar> cat = channel_concat<Scalar>({x, fixed});
        if (cache) cache->conv_out_in = cat;
        merged = conv2d(cat, m.conv_out);
        if (cache) cache->conv_out_out = merged;
    }
    if (cache) cache->merged = merged;

    Tensor<Scalar> up = depth_to_space(merged, cfg.scale);
    if (cache) cache->d2s_out = up;
    Tensor<Scalar> out = clipped_relu(up, Scalar(0), Scalar(1));
    if (cache) cache->output = out;
    return out;
}

struct ParamCount {
    std::int64_t trainable = 0;
    std::int64_t fixed = 0;
};

inline ParamCount param_count(const XcatConfig& cfg) {
    ParamCount pc;
    for (const auto& s : layer_plan(cfg)) {
        const std::int64_t k = static_cast<std::int64_t>(s.out) * s.in * s.kh * s.kw;
        if (s.trainable)
            pc.trainable += k + s.out;  // kernel + bias
        else
            pc.fixed += k;              // fixed kernel carries no bias parameters
    }
    return pc;
}

template <typename Scalar>
ParamCount param_count(const Model<Scalar>& m) {
    ParamCount pc;
    for (const auto* w : m.layers()) {
        if (w->trainable)
            pc.trainable += w->kernel_size() + w->out_channels;
        else
            pc.fixed += w->kernel_size();
    }
    return pc;
}

// Multiply-accumulates for one forward pass at the given LR resolution.
// Permutation stages (split/concat/rotate/D2S) and the residual add are free.
inline std::int64_t mac_count(const XcatConfig& cfg, int h, int w) {
    if (h <= 0 || w <= 0) return 0;
    std::int64_t per_pixel = 0;
    for (const auto& s : layer_plan(cfg))
        per_pixel += static_cast<std::int64_t>(s.out) * s.in * s.kh * s.kw;
    return per_pixel * h * w;
}

// Per-pixel MACs of a single block under the given config.
inline std::int64_t block_macs_per_pixel(const XcatConfig& cfg) {
    const std::int64_t F = cfg.feature_channels();
    if (cfg.block_kind == BlockKind::plain_conv3x3) return F * F * 9;
    std::int64_t macs = static_cast<std::int64_t>(cfg.split_x) * cfg.split_x * cfg.k0 * cfg.k0 +
                        static_cast<std::int64_t>(cfg.split_y) * cfg.split_y * cfg.k1 * cfg.k1;
    if (cfg.mix_mode == MixMode::conv1x1) macs += F * F;
    return macs;
}

}  // namespace xcat
