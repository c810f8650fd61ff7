#include "xcat/serialize.hpp"

#include <cstring>

#include "binio.hpp"

namespace xcat {
namespace detail {

namespace {
constexpr std::uint32_t kWeightVersion = 1;
constexpr char kWeightMagic[4] = {'H', 'X', 'S', 'R'};
}  // namespace

void write_config(Writer& w, const XcatConfig& cfg) {
    w.i32(cfg.m);
    w.i32(cfg.split_x);
    w.i32(cfg.split_y);
    w.i32(cfg.k0);
    w.i32(cfg.k1);
    w.u8(static_cast<std::uint8_t>(cfg.mix_mode));
    w.u8(static_cast<std::uint8_t>(cfg.rotate_direction));
    w.u8(static_cast<std::uint8_t>(cfg.block_kind));
    w.u8(static_cast<std::uint8_t>(cfg.post_block_conv));
    w.u8(static_cast<std::uint8_t>(cfg.merge_mode));
    w.i32(cfg.scale);
    w.i32(cfg.image_channels);
    w.u8(cfg.hidden_activation ? 1 : 0);
}

XcatConfig read_config(Reader& r) {
    XcatConfig cfg;
    cfg.m = r.i32();
    cfg.split_x = r.i32();
    cfg.split_y = r.i32();
    cfg.k0 = r.i32();
    cfg.k1 = r.i32();
    cfg.mix_mode = static_cast<MixMode>(r.u8());
    cfg.rotate_direction = static_cast<RotateDirection>(r.u8());
    cfg.block_kind = static_cast<BlockKind>(r.u8());
    cfg.post_block_conv = static_cast<PostBlockConv>(r.u8());
    cfg.merge_mode = static_cast<MergeMode>(r.u8());
    cfg.scale = r.i32();
    cfg.image_channels = r.i32();
    cfg.hidden_activation = r.u8() != 0;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("invalid config in file: ") + e.what());
    }
    return cfg;
}

}  // namespace detail

void save_weights(const Model<float>& m, const std::string& path) {
    detail::Writer w(path);
    w.bytes(detail::kWeightMagic, 4);
    w.u32(detail::kWeightVersion);
    detail::write_config(w, m.config);

    const auto plan = layer_plan(m.config);
    const auto layers = m.layers();
    w.u32(static_cast<std::uint32_t>(layers.size()));
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const ConvWeights<float>& cw = *layers[i];
        w.u8(static_cast<std::uint8_t>(plan[i].tag));
        w.u32(static_cast<std::uint32_t>(cw.out_channels));
        w.u32(static_cast<std::uint32_t>(cw.in_channels));
        w.u32(static_cast<std::uint32_t>(cw.kh));
        w.u32(static_cast<std::uint32_t>(cw.kw));
        w.array(cw.kernel);
        w.array(cw.bias);
        w.u8(cw.trainable ? 1 : 0);
    }
    w.close(path);
}

Model<float> load_weights(const std::string& path) {
    detail::Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, detail::kWeightMagic, 4) != 0)
        throw FormatError("bad magic in " + path);
    const std::uint32_t version = r.u32();
    if (version != detail::kWeightVersion)
        throw FormatError("unsupported weight file version " + std::to_string(version));

    const XcatConfig cfg = detail::read_config(r);
    const auto plan = layer_plan(cfg);

    // Build the skeleton first so a bad record never yields a partial model.
    Model<float> m = build<float>(cfg, 0);
    auto layers = m.layers();

    const std::uint32_t count = r.u32();
    if (count != layers.size())
        throw FormatError("config error: field m / layer plan declares " +
                          std::to_string(layers.size()) + " layers, file has " +
                          std::to_string(count));
    for (std::size_t i = 0; i < layers.size(); ++i) {
        ConvWeights<float>& cw = *layers[i];
        const auto tag = static_cast<LayerTag>(r.u8());
        if (tag != plan[i].tag)
            throw FormatError("layer " + std::to_string(i) + ": unexpected layer tag");
        const int out = static_cast<int>(r.u32());
        const int in = static_cast<int>(r.u32());
        const int kh = static_cast<int>(r.u32());
        const int kw = static_cast<int>(r.u32());
        if (out != cw.out_channels || in != cw.in_channels || kh != cw.kh || kw != cw.kw)
            throw FormatError("layer " + std::to_string(i) + ": shape mismatch");
        r.array(cw.kernel);
        r.array(cw.bias);
        cw.trainable = r.u8() != 0;
        if (cw.trainable != plan[i].trainable)
            throw FormatError("layer " + std::to_string(i) + ": trainable flag mismatch");
    }
    return m;
}

}  // namespace xcat
