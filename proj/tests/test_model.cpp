#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "xcat/model.hpp"
#include "xcat/presets.hpp"
#include "xcat/serialize.hpp"

using namespace xcat;

namespace {

TensorF random_image(int h, int w, std::mt19937_64& rng) {
    TensorF t(1, h, w, 3);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("fixed upsample kernel: conv + D2S equals nearest upsampling bit-exactly") {
    std::mt19937_64 rng(30);
    auto w = make_fixed_upsample_kernel<float>(3, 3);
    CHECK(w.out_channels == 27);
    CHECK(w.in_channels == 3);
    CHECK_FALSE(w.trainable);

    for (int iter = 0; iter < 20; ++iter) {
        auto img = random_image(4 + iter % 3, 5, rng);
        auto up = depth_to_space(conv2d(img, w), 3);
        CHECK(up.data() == nearest_upsample_reference(img, 3).data());
    }
}

TEST_CASE("fixed upsample kernel: scale 1 is the identity matrix") {
    auto w = make_fixed_upsample_kernel<float>(3, 1);
    CHECK(w.out_channels == 3);
    for (int o = 0; o < 3; ++o)
        for (int c = 0; c < 3; ++c)
            CHECK(w.k(o, c, 0, 0) == (o == c ? 1.0f : 0.0f));

    std::mt19937_64 rng(31);
    auto img = random_image(3, 3, rng);
    CHECK(conv2d(img, w).data() == img.data());
}

TEST_CASE("fixed upsample kernel: single channel, scale 2 is an all-ones column") {
    auto w = make_fixed_upsample_kernel<float>(1, 2);
    CHECK(w.out_channels == 4);
    CHECK(w.in_channels == 1);
    for (int o = 0; o < 4; ++o) CHECK(w.k(o, 0, 0, 0) == 1.0f);
}

TEST_CASE("baseline build: parameter counts 16519 trainable + 81 fixed") {
    XcatConfig cfg;
    auto pc = param_count(cfg);
    CHECK(pc.trainable == 16519);
    CHECK(pc.fixed == 81);

    // Closed-form count equals a walk over the built model's arrays.
    auto m = build<float>(cfg, 42);
    auto pc2 = param_count(m);
    CHECK(pc2.trainable == pc.trainable);
    CHECK(pc2.fixed == pc.fixed);
}

TEST_CASE("single HXBlock contributes 910 trainable parameters") {
    XcatConfig one, two;
    one.m = 1;
    two.m = 2;
    CHECK(param_count(two).trainable - param_count(one).trainable == 910);
}

TEST_CASE("build determinism and rotation amount") {
    XcatConfig cfg;
    auto a = build<float>(cfg, 7);
    auto b = build<float>(cfg, 7);
    auto la = a.layers(), lb = b.layers();
    for (std::size_t i = 0; i < la.size(); ++i) {
        CHECK(la[i]->kernel == lb[i]->kernel);
        CHECK(la[i]->bias == lb[i]->bias);
    }
    CHECK(cfg.rotate_amount() == 7);  // 28 / 4
    auto c = build<float>(cfg, 8);
    CHECK(c.conv_in.kernel != a.conv_in.kernel);
}

TEST_CASE("build rejects invalid configs") {
    XcatConfig cfg;
    cfg.split_x = 20;  // 27 channels, not divisible by 4 for cross concat
    CHECK_THROWS_AS(build<float>(cfg, 0), std::invalid_argument);
    XcatConfig k;
    k.k0 = 5;
    CHECK_THROWS_AS(build<float>(k, 0), std::invalid_argument);
}

TEST_CASE("forward: zero input through a zero-bias zeroed model gives zero output") {
    XcatConfig cfg;
    auto m = build<float>(cfg, 1);
    for (auto* w : m.layers())
        if (w->trainable) {
            std::fill(w->kernel.begin(), w->kernel.end(), 0.0f);
            std::fill(w->bias.begin(), w->bias.end(), 0.0f);
        }
    TensorF zero(1, 6, 6, 3);
    auto out = forward(m, zero);
    for (const auto v : out.data()) CHECK(v == 0.0f);
}

TEST_CASE("forward: zero feature weights leave only the nearest-neighbor branch") {
    std::mt19937_64 rng(32);
    XcatConfig cfg;
    auto m = build<float>(cfg, 2);
    for (auto* w : m.layers())
        if (w->trainable) {
            std::fill(w->kernel.begin(), w->kernel.end(), 0.0f);
            std::fill(w->bias.begin(), w->bias.end(), 0.0f);
        }
    auto img = random_image(5, 7, rng);
    auto out = forward(m, img);
    auto expect = clipped_relu(nearest_upsample_reference(img, 3), 0.0f, 1.0f);
    CHECK(out.data() == expect.data());
}

TEST_CASE("forward: 32x32 input maps to 96x96 and stays within [0,1]") {
    std::mt19937_64 rng(33);
    auto m = build<float>(XcatConfig{}, 3);
    auto img = random_image(32, 32, rng);
    auto out = forward(m, img);
    CHECK(out.shape() == Shape{1, 96, 96, 3});
    for (const auto v : out.data()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    CHECK_THROWS_AS(forward(m, TensorF(1, 4, 4, 2)), std::invalid_argument);
}

TEST_CASE("straight vs cross concat: same shapes, params and MACs, different values") {
    std::mt19937_64 rng(34);
    XcatConfig cross, straight;
    straight.mix_mode = MixMode::straight_concat;
    CHECK(param_count(cross).trainable == param_count(straight).trainable);
    CHECK(mac_count(cross, 32, 32) == mac_count(straight, 32, 32));

    auto mc = build<float>(cross, 5);
    auto ms = build<float>(straight, 5);
    auto img = random_image(8, 8, rng);
    auto oc = forward(mc, img);
    auto os = forward(ms, img);
    CHECK(oc.shape() == os.shape());
    CHECK(oc.data() != os.data());
}

TEST_CASE("MAC accounting: block formulas and resolution scaling") {
    XcatConfig cfg;  // 21/7, 1x1/3x3
    CHECK(block_macs_per_pixel(cfg) == 882);  // 21*21 + 7*7*9

    XcatConfig c33 = cfg;
    c33.k0 = 3;
    CHECK(block_macs_per_pixel(c33) == 4410);  // 21*21*9 + 7*7*9

    CHECK(mac_count(cfg, 0, 10) == 0);
    CHECK(mac_count(cfg, 1, 1) * 32 * 32 == mac_count(cfg, 32, 32));

    // Closed-form per-pixel total equals a walk over built layers.
    auto m = build<float>(cfg, 0);
    std::int64_t walked = 0;
    for (const auto* w : m.layers())
        walked += static_cast<std::int64_t>(w->out_channels) * w->in_channels * w->kh * w->kw;
    CHECK(mac_count(cfg, 1, 1) == walked);
}

TEST_CASE("all ablation presets build; orderings match the efficiency story") {
    std::mt19937_64 rng(35);
    auto img = random_image(6, 6, rng);
    for (const auto& name : preset_names()) {
        auto cfg = preset_config(name);
        auto m = build<float>(cfg, 11);
        auto out = forward(m, img);
        CHECK(out.shape() == Shape{1, 18, 18, 3});
    }

    const auto base = mac_count(preset_config("xcat-baseline"), 360, 640);
    const auto c = mac_count(preset_config("C"), 360, 640);
    const auto d = mac_count(preset_config("D"), 360, 640);
    const auto l = mac_count(preset_config("L"), 360, 640);
    CHECK(c > 3 * base / 2);  // C and D are much heavier than the baseline
    CHECK(d > 3 * base / 2);
    const double ratio = static_cast<double>(c) / static_cast<double>(d);
    CHECK(ratio > 0.8);
    CHECK(ratio < 1.25);  // C and D are close to each other
    CHECK(l < base);      // L is the lightest row
}

TEST_CASE("weight file round-trip is bit-exact") {
    auto m = build<float>(XcatConfig{}, 99);
    const auto path = temp_file("xcat_roundtrip.hxsr");
    save_weights(m, path.string());
    auto loaded = load_weights(path.string());

    CHECK(loaded.config.m == m.config.m);
    auto la = m.layers(), lb = loaded.layers();
    REQUIRE(la.size() == lb.size());
    for (std::size_t i = 0; i < la.size(); ++i) {
        CHECK(la[i]->kernel == lb[i]->kernel);
        CHECK(la[i]->bias == lb[i]->bias);
        CHECK(la[i]->trainable == lb[i]->trainable);
    }
    std::filesystem::remove(path);
}

TEST_CASE("weight file: truncation and bad magic are format errors") {
    auto m = build<float>(XcatConfig{}, 1);
    const auto path = temp_file("xcat_corrupt.hxsr");
    save_weights(m, path.string());

    // Truncate.
    const auto trunc = temp_file("xcat_trunc.hxsr");
    {
        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        std::ofstream out(trunc, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_weights(trunc.string()), FormatError);

    // Corrupt the magic.
    const auto bad = temp_file("xcat_badmagic.hxsr");
    {
        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        bytes[0] = 'Z';
        std::ofstream out(bad, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(load_weights(bad.string()), FormatError);

    CHECK_THROWS_AS(load_weights("/nonexistent/path.hxsr"), FormatError);
    for (const auto& p : {path, trunc, bad}) std::filesystem::remove(p);
}

TEST_CASE("weight file: mismatched m is a config error naming the field") {
    auto m = build<float>(XcatConfig{}, 1);
    const auto path = temp_file("xcat_badm.hxsr");
    save_weights(m, path.string());
    {
        // Patch the m field (first i32 after magic+version) from 2 to 3.
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(8);
        const std::int32_t bad_m = 3;
        f.write(reinterpret_cast<const char*>(&bad_m), 4);
    }
    try {
        load_weights(path.string());
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("m") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("concat merge rebuilds the channel plan") {
    auto cfg = preset_config("M");
    REQUIRE(cfg.merge_mode == MergeMode::concat);
    auto plan = layer_plan(cfg);
    const auto& conv_out = plan[plan.size() - 2];
    CHECK(conv_out.tag == LayerTag::conv_out);
    CHECK(conv_out.in == cfg.feature_channels() + 27);
    CHECK(conv_out.out == 27);
}
