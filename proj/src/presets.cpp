#include "xcat/presets.hpp"

#include <map>
#include <stdexcept>

namespace xcat {

namespace {

std::map<std::string, XcatConfig> make_presets() {
    std::map<std::string, XcatConfig> p;

    XcatConfig base;  // m=2, 21/7, 1x1/3x3, cross concat, 3x3 post conv, add merge
    p["xcat-baseline"] = base;
    p["A"] = base;  // same architecture; row A differs only in the training recipe

    XcatConfig b = base;
    b.mix_mode = MixMode::conv1x1;
    p["B"] = b;

    XcatConfig c = b;
    c.k0 = 3;
    p["C"] = c;

    XcatConfig d = base;
    d.block_kind = BlockKind::plain_conv3x3;
    p["D"] = d;

    XcatConfig e = base;
    e.m = 4;
    p["E"] = e;

    XcatConfig f = e;
    f.post_block_conv = PostBlockConv::conv1x1;
    p["F"] = f;

    XcatConfig g = e;
    g.post_block_conv = PostBlockConv::none;
    p["G"] = g;

    XcatConfig h = g;
    h.split_x = 16;
    h.split_y = 12;
    p["H"] = h;

    XcatConfig i = g;
    i.split_x = 7;
    i.split_y = 21;
    p["I"] = i;

    XcatConfig j = i;
    j.k0 = 3;
    p["J"] = j;

    XcatConfig k = i;
    k.m = 3;
    p["K"] = k;

    XcatConfig l = g;
    l.split_x = 16;
    l.split_y = 4;
    p["L"] = l;

    XcatConfig m = l;
    m.merge_mode = MergeMode::concat;
    p["M"] = m;

    // Cross vs straight concatenation grid.
    auto grid = [&p](int sx, int sy, int blocks) {
        XcatConfig cfg;
        cfg.split_x = sx;
        cfg.split_y = sy;
        cfg.m = blocks;
        const std::string stem = "t3-" + std::to_string(sx) + "x" + std::to_string(sy) +
                                 "-m" + std::to_string(blocks);
        cfg.mix_mode = MixMode::cross_concat;
        p[stem + "-cross"] = cfg;
        cfg.mix_mode = MixMode::straight_concat;
        p[stem + "-straight"] = cfg;
    };
    grid(21, 7, 2);
    grid(21, 7, 4);
    grid(21, 7, 8);
    grid(21, 7, 12);
    grid(24, 8, 6);
    grid(56, 8, 4);

    return p;
}

const std::map<std::string, XcatConfig>& presets() {
    static const std::map<std::string, XcatConfig> p = make_presets();
    return p;
}

}  // namespace

XcatConfig preset_config(const std::string& name) {
    const auto& p = presets();
    const auto it = p.find(name);
    if (it == p.end()) {
        std::string msg = "unknown config '" + name + "'; valid names:";
        for (const auto& [k, v] : p) msg += " " + k;
        throw std::invalid_argument(msg);
    }
    return it->second;
}

std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    for (const auto& [k, v] : presets()) names.push_back(k);
    return names;
}

}  // namespace xcat
