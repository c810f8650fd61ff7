#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "xcat/metrics.hpp"
#include "xcat/model.hpp"

namespace xcat {

// Affine uint8 quantization: q = clamp(round(r/scale) + zero_point, 0, 255).
struct QuantParams {
    double scale = 1.0 / 255.0;
    int zero_point = 0;
};

inline std::uint8_t quantize_value(double r, const QuantParams& p) {
    // llround is round-half-away-from-zero.
    const long long q = std::llround(r / p.scale) + p.zero_point;
    return static_cast<std::uint8_t>(std::clamp(q, 0LL, 255LL));
}

inline double dequantize_value(std::uint8_t q, const QuantParams& p) {
    return (static_cast<int>(q) - p.zero_point) * p.scale;
}

// Range-derived params. The range is widened to include 0 so the zero point
// is exact; a degenerate [0,0] range falls back to scale 1/255.
inline QuantParams make_quant_params(double mn, double mx) {
    mn = std::min(mn, 0.0);
    mx = std::max(mx, 0.0);
    QuantParams p;
    if (mx == mn) {
        p.scale = 1.0 / 255.0;
        p.zero_point = 0;
        return p;
    }
    p.scale = (mx - mn) / 255.0;
    p.zero_point = static_cast<int>(std::clamp(std::llround(-mn / p.scale), 0LL, 255LL));
    return p;
}

struct EdgeRange {
    double mn = std::numeric_limits<double>::infinity();
    double mx = -std::numeric_limits<double>::infinity();

    void observe(double v) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    template <typename Scalar>
    void observe(const Tensor<Scalar>& t) {
        for (const auto v : t.data()) observe(static_cast<double>(v));
    }
    void merge(const EdgeRange& o) {
        mn = std::min(mn, o.mn);
        mx = std::max(mx, o.mx);
    }
};

// Activation-edge layout for a config. Edges sit after activations; pure
// permutation stages (split/concat/rotate/D2S) reuse their producer's edge.
struct EdgePlan {
    int input = -1;
    int conv_in_out = -1;
    std::vector<int> block_concat;  // per block; used by conv1x1 mix only, else -1
    std::vector<int> block_out;
    int post_out = -1;      // -1 when post_block_conv == none
    int feature = -1;       // edge feeding the merge stage
    int conv_out_out = -1;
    int fixed_out = -1;     // add mode: own pinned edge; concat mode: == merge
    int merge = -1;         // tensor entering depth_to_space lives on this edge (add mode)
    int output = -1;
    int count = 0;
    std::vector<bool> pinned;  // edges fixed to scale 1/255, zero_point 0
};

inline EdgePlan edge_plan(const XcatConfig& cfg) {
    cfg.validate();
    EdgePlan ep;
    int next = 0;
    auto fresh = [&next]() { return next++; };

    ep.input = fresh();
    ep.conv_in_out = fresh();
    for (int b = 0; b < cfg.m; ++b) {
        const bool mix1x1 =
            cfg.block_kind == BlockKind::hxblock && cfg.mix_mode == MixMode::conv1x1;
        ep.block_concat.push_back(mix1x1 ? fresh() : -1);
        ep.block_out.push_back(fresh());
    }
    if (cfg.post_block_conv != PostBlockConv::none) ep.post_out = fresh();
    ep.feature = ep.post_out >= 0 ? ep.post_out : ep.block_out.back();

    if (cfg.merge_mode == MergeMode::add) {
        ep.conv_out_out = fresh();
        ep.fixed_out = fresh();
        ep.merge = fresh();
        ep.output = ep.merge;  // D2S and the final clamp are byte moves
    } else {
        ep.merge = fresh();  // shared concat edge (feature and fixed branches)
        ep.fixed_out = ep.merge;
        ep.conv_out_out = fresh();
        ep.output = ep.conv_out_out;
    }
    ep.count = next;

    ep.pinned.assign(static_cast<std::size_t>(ep.count), false);
    ep.pinned[static_cast<std::size_t>(ep.input)] = true;
    ep.pinned[static_cast<std::size_t>(ep.output)] = true;
    if (cfg.merge_mode == MergeMode::add) {
        ep.pinned[static_cast<std::size_t>(ep.fixed_out)] = true;
        ep.pinned[static_cast<std::size_t>(ep.merge)] = true;
    }
    return ep;
}

// Per-edge (min, max) observed over the calibration set.
struct CalibrationRecord {
    XcatConfig config;
    std::vector<EdgeRange> edges;

    void merge(const CalibrationRecord& o) {
        if (edges.size() != o.edges.size())
            throw std::invalid_argument("CalibrationRecord::merge: edge count mismatch");
        for (std::size_t i = 0; i < edges.size(); ++i) edges[i].merge(o.edges[i]);
    }
};

template <typename Scalar>
CalibrationRecord calibrate(const Model<Scalar>& model,
                            const std::vector<Tensor<Scalar>>& images) {
    if (images.empty())
        throw std::invalid_argument("calibrate: at least one image required");
    const auto& cfg = model.config;
    const EdgePlan ep = edge_plan(cfg);

    CalibrationRecord rec;
    rec.config = cfg;
    rec.edges.resize(static_cast<std::size_t>(ep.count));
    auto& e = rec.edges;

    for (const auto& img : images) {
        ForwardCache<Scalar> cache;
        forward(model, img, &cache);

        e[ep.input].observe(cache.input);
        e[ep.conv_in_out].observe(cache.conv_in_act);
        for (int b = 0; b < cfg.m; ++b) {
            const auto& bc = cache.blocks[static_cast<std::size_t>(b)];
            if (cfg.block_kind == BlockKind::plain_conv3x3) {
                e[ep.block_out[b]].observe(bc.out);
            } else if (cfg.mix_mode == MixMode::conv1x1) {
                e[ep.block_concat[b]].observe(bc.concat_out);
                e[ep.block_out[b]].observe(bc.out);
            } else {
                // Branch outputs share the concat/rotate edge.
                e[ep.block_out[b]].observe(bc.concat_out);
            }
        }
        if (ep.post_out >= 0) e[ep.post_out].observe(cache.feature);
        if (cfg.merge_mode == MergeMode::add) {
            e[ep.conv_out_out].observe(cache.conv_out_out);
            e[ep.fixed_out].observe(cache.fixed_out);
            e[ep.merge].observe(cache.merged);
        } else {
            // Shared concat edge covers both producers.
            e[ep.merge].observe(cache.feature);
            e[ep.merge].observe(cache.fixed_out);
            e[ep.conv_out_out].observe(cache.merged);
        }
        e[ep.output].observe(cache.output);
    }
    return rec;
}

struct QLayer {
    LayerTag tag;
    int out = 0, in = 0, kh = 0, kw = 0;
    std::vector<std::uint8_t> weights;  // (out, in, kh, kw) order
    QuantParams weight_q;
    std::vector<std::int32_t> bias;     // scale = input_scale * weight_scale
    bool trainable = true;
    int in_edge = -1, out_edge = -1;
    bool relu = false;  // fused post-conv ReLU clamp

    std::uint8_t k(int o, int c, int i, int j) const {
        return weights[static_cast<std::size_t>(((static_cast<std::int64_t>(o) * in + c) *
                                                     kh + i) * kw + j)];
    }
};

struct QModel {
    XcatConfig config;
    std::vector<QLayer> layers;  // canonical plan order
    std::vector<QuantParams> edges;
};

// Wire each plan layer to its activation edges.
inline void assign_layer_edges(const XcatConfig& cfg, const EdgePlan& ep,
                               std::vector<QLayer>& layers) {
    const bool act = cfg.hidden_activation;
    std::size_t block = 0;
    int prev_edge = ep.conv_in_out;
    for (auto& l : layers) {
        switch (l.tag) {
            case LayerTag::conv_in:
                l.in_edge = ep.input;
                l.out_edge = ep.conv_in_out;
                l.relu = act;
                break;
            case LayerTag::branch0:
            case LayerTag::branch1: {
                l.in_edge = prev_edge;
                const bool mix1x1 = cfg.mix_mode == MixMode::conv1x1;
                l.out_edge = mix1x1 ? ep.block_concat[block] : ep.block_out[block];
                l.relu = act;
                if (l.tag == LayerTag::branch1 && !mix1x1)
                    prev_edge = ep.block_out[block++];
                break;
            }
            case LayerTag::mix_conv:
                l.in_edge = ep.block_concat[block];
                l.out_edge = ep.block_out[block];
                prev_edge = ep.block_out[block++];
                break;
            case LayerTag::plain_block:
                l.in_edge = prev_edge;
                l.out_edge = ep.block_out[block];
                l.relu = act;
                prev_edge = ep.block_out[block++];
                break;
            case LayerTag::post_conv:
                l.in_edge = prev_edge;
                l.out_edge = cfg.merge_mode == MergeMode::concat ? ep.merge : ep.post_out;
                break;
            case LayerTag::conv_out:
                l.in_edge = cfg.merge_mode == MergeMode::concat ? ep.merge : ep.feature;
                l.out_edge = ep.conv_out_out;
                break;
            case LayerTag::fixed_upsample:
                l.in_edge = ep.input;
                l.out_edge = ep.fixed_out;
                break;
        }
    }
    // When the feature path ends at the shared concat edge without a post
    // conv, its producer must emit that edge directly.
    if (cfg.merge_mode == MergeMode::concat && cfg.post_block_conv == PostBlockConv::none)
        for (auto& l : layers)
            if (l.out_edge == ep.block_out.back()) l.out_edge = ep.merge;
}

template <typename Scalar>
QModel quantize_model(const Model<Scalar>& model, const CalibrationRecord& cal) {
    const auto& cfg = model.config;
    const EdgePlan ep = edge_plan(cfg);
    if (cal.edges.size() != static_cast<std::size_t>(ep.count))
        throw std::invalid_argument("quantize_model: calibration record covers " +
                                    std::to_string(cal.edges.size()) + " edges, model has " +
                                    std::to_string(ep.count));

    QModel qm;
    qm.config = cfg;
    qm.edges.resize(static_cast<std::size_t>(ep.count));
    for (int i = 0; i < ep.count; ++i) {
        if (ep.pinned[static_cast<std::size_t>(i)])
            qm.edges[static_cast<std::size_t>(i)] = QuantParams{1.0 / 255.0, 0};
        else
            qm.edges[static_cast<std::size_t>(i)] =
                make_quant_params(cal.edges[static_cast<std::size_t>(i)].mn,
                                  cal.edges[static_cast<std::size_t>(i)].mx);
    }

    const auto plan = layer_plan(cfg);
    const auto layers = model.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& w = *layers[i];
        QLayer ql;
        ql.tag = plan[i].tag;
        ql.out = w.out_channels;
        ql.in = w.in_channels;
        ql.kh = w.kh;
        ql.kw = w.kw;
        ql.trainable = w.trainable;
        if (w.trainable) {
            EdgeRange wr;
            for (const auto v : w.kernel) wr.observe(static_cast<double>(v));
            ql.weight_q = make_quant_params(wr.mn, wr.mx);
        } else {
            // The fixed replication kernel holds only {0, 1}: scale 1 is exact.
            ql.weight_q = QuantParams{1.0, 0};
        }
        ql.weights.resize(w.kernel.size());
        for (std::size_t k = 0; k < w.kernel.size(); ++k)
            ql.weights[k] = quantize_value(static_cast<double>(w.kernel[k]), ql.weight_q);
        qm.layers.push_back(std::move(ql));
    }
    assign_layer_edges(cfg, ep, qm.layers);

    // Bias scale is input_scale * weight_scale.
    for (std::size_t i = 0; i < qm.layers.size(); ++i) {
        auto& ql = qm.layers[i];
        const double bscale =
            qm.edges[static_cast<std::size_t>(ql.in_edge)].scale * ql.weight_q.scale;
        ql.bias.resize(layers[i]->bias.size());
        for (std::size_t k = 0; k < ql.bias.size(); ++k)
            ql.bias[k] = static_cast<std::int32_t>(
                std::llround(static_cast<double>(layers[i]->bias[k]) / bscale));
    }
    return qm;
}

// Integer convolution with zero-point correction and double-multiplier
// requantization, fused ReLU clamp when requested.
inline Tensor<std::uint8_t> qconv(const Tensor<std::uint8_t>& x, const QLayer& l,
                                  const std::vector<QuantParams>& edges) {
    if (x.c() != l.in)
        throw std::invalid_argument("qconv: channel mismatch");
    const QuantParams in_q = edges[static_cast<std::size_t>(l.in_edge)];
    const QuantParams out_q = edges[static_cast<std::size_t>(l.out_edge)];
    const double M = in_q.scale * l.weight_q.scale / out_q.scale;
    const int ph = l.kh / 2, pw = l.kw / 2;
    const int zx = in_q.zero_point, zw = l.weight_q.zero_point;

    Tensor<std::uint8_t> out(x.n(), x.h(), x.w(), l.out);
    for (int n = 0; n < x.n(); ++n)
        for (int y = 0; y < x.h(); ++y)
            for (int xx = 0; xx < x.w(); ++xx)
                for (int o = 0; o < l.out; ++o) {
                    std::int32_t acc = l.bias[static_cast<std::size_t>(o)];
                    for (int c = 0; c < l.in; ++c)
                        for (int i = 0; i < l.kh; ++i) {
                            const int sy = y + i - ph;
                            if (sy < 0 || sy >= x.h()) continue;
                            for (int j = 0; j < l.kw; ++j) {
                                const int sx = xx + j - pw;
                                if (sx < 0 || sx >= x.w()) continue;
                                acc += (static_cast<std::int32_t>(x(n, sy, sx, c)) - zx) *
                                       (static_cast<std::int32_t>(l.k(o, c, i, j)) - zw);
                            }
                        }
                    long long q = std::llround(static_cast<double>(acc) * M) + out_q.zero_point;
                    q = std::clamp(q, 0LL, 255LL);
                    if (l.relu) q = std::max(q, static_cast<long long>(out_q.zero_point));
                    out(n, y, xx, o) = static_cast<std::uint8_t>(q);
                }
    return out;
}

// Elementwise add with rescale to the output edge.
inline Tensor<std::uint8_t> qadd(const Tensor<std::uint8_t>& a, const QuantParams& aq,
                                 const Tensor<std::uint8_t>& b, const QuantParams& bq,
                                 const QuantParams& oq) {
    if (!a.same_shape(b)) throw std::invalid_argument("qadd: shape mismatch");
    Tensor<std::uint8_t> out(a.shape());
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double r = dequantize_value(a.data()[static_cast<std::size_t>(i)], aq) +
                         dequantize_value(b.data()[static_cast<std::size_t>(i)], bq);
        out.data()[static_cast<std::size_t>(i)] = quantize_value(r, oq);
    }
    return out;
}

// Integer-only forward pass. Input codes live on the pinned input edge
// (scale 1/255, zero point 0).
inline Tensor<std::uint8_t> qforward(const QModel& qm, const Tensor<std::uint8_t>& lr) {
    const auto& cfg = qm.config;
    if (lr.c() != cfg.image_channels)
        throw std::invalid_argument("qforward: expected " +
                                    std::to_string(cfg.image_channels) + " input channels");
    const EdgePlan ep = edge_plan(cfg);
    if (qm.edges.size() != static_cast<std::size_t>(ep.count) || qm.layers.empty())
        throw std::runtime_error("qforward: inconsistent quantized model");

    auto layer_at = [&](std::size_t i) -> const QLayer& { return qm.layers[i]; };
    std::size_t li = 0;

    Tensor<std::uint8_t> x = qconv(lr, layer_at(li++), qm.edges);
    for (int b = 0; b < cfg.m; ++b) {
        if (cfg.block_kind == BlockKind::plain_conv3x3) {
            x = qconv(x, layer_at(li++), qm.edges);
        } else {
            auto parts = channel_split(x, {cfg.split_x, cfg.split_y});
            Tensor<std::uint8_t> p0 = qconv(parts[0], layer_at(li++), qm.edges);
            Tensor<std::uint8_t> p1 = qconv(parts[1], layer_at(li++), qm.edges);
            Tensor<std::uint8_t> cat = channel_concat<std::uint8_t>({p0, p1});
            switch (cfg.mix_mode) {
                case MixMode::cross_concat:
                    x = channel_rotate(cat, cfg.rotate_amount());
                    break;
                case MixMode::straight_concat:
                    x = std::move(cat);
                    break;
                case MixMode::conv1x1:
                    x = qconv(cat, layer_at(li++), qm.edges);
                    break;
            }
        }
    }
    if (cfg.post_block_conv != PostBlockConv::none) x = qconv(x, layer_at(li++), qm.edges);

    const QLayer& conv_out_l = layer_at(li++);
    const QLayer& fixed_l = layer_at(li++);
    Tensor<std::uint8_t> fixed = qconv(lr, fixed_l, qm.edges);

    Tensor<std::uint8_t> merged;
    if (cfg.merge_mode == MergeMode::add) {
        Tensor<std::uint8_t> f = qconv(x, conv_out_l, qm.edges);
        merged = qadd(f, qm.edges[static_cast<std::size_t>(conv_out_l.out_edge)],
                      fixed, qm.edges[static_cast<std::size_t>(fixed_l.out_edge)],
                      qm.edges[static_cast<std::size_t>(ep.merge)]);
    } else {
        merged = qconv(channel_concat<std::uint8_t>({x, fixed}), conv_out_l, qm.edges);
    }

    Tensor<std::uint8_t> up = depth_to_space(merged, cfg.scale);

    // Quantized clipped ReLU(0,1) on the output edge.
    const QuantParams out_q = qm.edges[static_cast<std::size_t>(ep.output)];
    const std::uint8_t q_lo = quantize_value(0.0, out_q);
    const std::uint8_t q_hi = quantize_value(1.0, out_q);
    for (auto& v : up.data()) v = std::clamp(v, q_lo, q_hi);
    return up;
}

// uint8 image codes <-> [0,1] float on the pinned input/output convention.
inline Tensor<std::uint8_t> to_codes(const Tensor<float>& t) {
    Tensor<std::uint8_t> out(t.shape());
    const QuantParams p{1.0 / 255.0, 0};
    for (std::int64_t i = 0; i < t.size(); ++i)
        out.data()[static_cast<std::size_t>(i)] =
            quantize_value(t.data()[static_cast<std::size_t>(i)], p);
    return out;
}

inline Tensor<float> from_codes(const Tensor<std::uint8_t>& t) {
    Tensor<float> out(t.shape());
    for (std::int64_t i = 0; i < t.size(); ++i)
        out.data()[static_cast<std::size_t>(i)] =
            static_cast<float>(t.data()[static_cast<std::size_t>(i)]) / 255.0f;
    return out;
}

struct SearchResult {
    int best_index = -1;
    std::vector<double> scores;  // mean PSNR per candidate, -inf on failure
};

// Linear search over single-image representative datasets: calibrate on each
// candidate alone, quantize, score by mean PSNR on the validation pairs, and
// return the argmax (ties broken by lowest index).
inline SearchResult representative_search(const Model<float>& model,
                                          const std::vector<Tensor<float>>& candidates,
                                          const std::vector<ImagePair>& val_pairs,
                                          PsnrMode mode = PsnrMode::rgb) {
    if (candidates.empty())
        throw std::invalid_argument("representative_search: no candidates");
    if (val_pairs.empty())
        throw std::invalid_argument("representative_search: no validation pairs");

    SearchResult res;
    for (const auto& cand : candidates) {
        double score = -std::numeric_limits<double>::infinity();
        try {
            const auto cal = calibrate(model, std::vector<Tensor<float>>{cand});
            const QModel qm = quantize_model(model, cal);
            double sum = 0.0;
            for (const auto& pair : val_pairs) {
                const auto sr = from_codes(qforward(qm, to_codes(pair.lr)));
                const auto db = psnr(sr, pair.hr, mode);
                sum += db ? *db : std::numeric_limits<double>::infinity();
            }
            score = sum / static_cast<double>(val_pairs.size());
        } catch (const std::exception&) {
            // Failed candidates score -inf; the search keeps going.
        }
        res.scores.push_back(score);
    }
    res.best_index = 0;
    for (std::size_t i = 1; i < res.scores.size(); ++i)
        if (res.scores[i] > res.scores[static_cast<std::size_t>(res.best_index)])
            res.best_index = static_cast<int>(i);
    return res;
}

// Quantized model file, magic "HXQ8".
void save_qmodel(const QModel& qm, const std::string& path);
QModel load_qmodel(const std::string& path);

}  // namespace xcat
