#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "xcat/eval.hpp"
#include "xcat/image_io.hpp"
#include "xcat/metrics.hpp"

using namespace xcat;

namespace {

TensorU8 random_rgb(int h, int w, std::mt19937_64& rng) {
    TensorU8 t(1, h, w, 3);
    std::uniform_int_distribution<int> byte(0, 255);
    for (auto& v : t.data()) v = static_cast<std::uint8_t>(byte(rng));
    return t;
}

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

// Separable reference decimation computed entirely in double, one output
// pixel at a time, directly from the 2-D tap definition.
double downsample_oracle_at(const TensorD& hr, int factor, int oy, int ox, int c) {
    const int radius = 2 * factor;
    auto taps_1d = [&](int out_i, int in_size) {
        const double center = (out_i + 0.5) * factor - 0.5;
        const int s0 = static_cast<int>(std::ceil(center)) - radius + 1;
        std::vector<std::pair<int, double>> t;
        double sum = 0.0;
        for (int s = s0; s < s0 + 2 * radius; ++s) {
            const double w = cubic_kernel((s - center) / factor) / factor;
            t.emplace_back(std::clamp(s, 0, in_size - 1), w);
            sum += w;
        }
        for (auto& [idx, w] : t) w /= sum;
        return t;
    };
    double acc = 0.0;
    for (const auto& [sy, wy] : taps_1d(oy, hr.h()))
        for (const auto& [sx, wx] : taps_1d(ox, hr.w()))
            acc += wy * wx * hr(0, sy, sx, c);
    return std::clamp(acc, 0.0, 1.0);
}

}  // namespace

TEST_CASE("cubic kernel: interpolation conditions") {
    CHECK(cubic_kernel(0.0) == 1.0);
    CHECK(cubic_kernel(1.0) == 0.0);
    CHECK(cubic_kernel(-1.0) == 0.0);
    CHECK(cubic_kernel(2.0) == 0.0);
    CHECK(cubic_kernel(2.5) == 0.0);
    CHECK(cubic_kernel(0.5) == cubic_kernel(-0.5));
    // Partition of unity at integer-offset sample grids.
    for (double ph : {0.0, 0.25, 0.5, 0.9}) {
        double s = 0.0;
        for (int i = -3; i <= 3; ++i) s += cubic_kernel(i - ph);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("bicubic_downsample: constants, shape, errors") {
    auto t = TensorF::constant({1, 12, 9, 3}, 0.37f);
    auto d = bicubic_downsample(t, 3);
    CHECK(d.shape() == Shape{1, 4, 3, 3});
    for (const auto v : d.data()) CHECK(v == doctest::Approx(0.37f).epsilon(1e-6));

    CHECK(bicubic_downsample(t, 1).data() == t.data());
    CHECK_THROWS_AS(bicubic_downsample(t, 5), std::invalid_argument);
    CHECK_THROWS_AS(bicubic_downsample(t, 0), std::invalid_argument);
}

TEST_CASE("bicubic_downsample matches a per-pixel double-precision oracle") {
    std::mt19937_64 rng(60);
    TensorD hr(1, 15, 12, 3);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (auto& v : hr.data()) v = dist(rng);

    auto d = bicubic_downsample(hr, 3);
    for (int y = 0; y < d.h(); ++y)
        for (int x = 0; x < d.w(); ++x)
            for (int c = 0; c < 3; ++c)
                CHECK(d(0, y, x, c) ==
                      doctest::Approx(downsample_oracle_at(hr, 3, y, x, c)).epsilon(1e-12));
}

TEST_CASE("bicubic_downsample commutes with horizontal flips") {
    std::mt19937_64 rng(61);
    TensorF hr(1, 12, 12, 3);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    for (auto& v : hr.data()) v = dist(rng);

    auto a = flip_horizontal(bicubic_downsample(hr, 3));
    auto b = bicubic_downsample(flip_horizontal(hr), 3);
    for (std::size_t i = 0; i < a.data().size(); ++i)
        CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-6));
}

TEST_CASE("bicubic_upsample: constants preserved, shape, interior smoothness") {
    auto t = TensorF::constant({1, 4, 4, 3}, 0.6f);
    auto u = bicubic_upsample(t, 3);
    CHECK(u.shape() == Shape{1, 12, 12, 3});
    for (const auto v : u.data()) CHECK(v == doctest::Approx(0.6f).epsilon(1e-6));
    CHECK(bicubic_upsample(t, 1).data() == t.data());

    // On a linear ramp the interior reproduces the ramp exactly
    // (cubic interpolation has quadratic precision).
    TensorF ramp(1, 1, 8, 1);
    for (int x = 0; x < 8; ++x) ramp(0, 0, x, 0) = 0.1f * x;
    auto ur = bicubic_upsample(ramp, 2);
    for (int x = 4; x < 12; ++x)
        CHECK(ur(0, 0, x, 0) ==
              doctest::Approx(0.1 * ((x + 0.5) / 2.0 - 0.5)).epsilon(1e-5));
}

TEST_CASE("psnr: closed-form cases") {
    auto a = TensorF::constant({1, 4, 4, 3}, 1.0f);
    auto b = TensorF::constant({1, 4, 4, 3}, 0.0f);
    auto full = psnr(a, b);
    REQUIRE(full.has_value());
    CHECK(*full == doctest::Approx(0.0));  // MSE 1 -> 0 dB

    auto half = TensorF::constant({1, 4, 4, 3}, 0.5f);
    auto six = psnr(a, half);
    CHECK(*six == doctest::Approx(20.0 * std::log10(2.0)));  // ~6.0206 dB

    CHECK_FALSE(psnr(a, a).has_value());  // identical -> infinite-PSNR signal
    CHECK_THROWS_AS(psnr(a, TensorF(1, 4, 4, 1)), std::invalid_argument);
}

TEST_CASE("psnr: symmetry and monotonicity in error magnitude") {
    std::mt19937_64 rng(62);
    TensorF a(1, 6, 6, 3), n1(1, 6, 6, 3), n2(1, 6, 6, 3);
    std::uniform_real_distribution<float> dist(0.2f, 0.8f);
    std::uniform_real_distribution<float> noise(-0.01f, 0.01f);
    for (auto& v : a.data()) v = dist(rng);
    n1 = a;
    n2 = a;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        const float e = noise(rng);
        n1.data()[i] += e;
        n2.data()[i] += 3.0f * e;
    }
    CHECK(*psnr(a, n1) == doctest::Approx(*psnr(n1, a)));
    CHECK(*psnr(a, n1) > *psnr(a, n2));
}

TEST_CASE("psnr in Y mode uses BT.601 studio-swing luminance") {
    CHECK(luminance_y(0, 0, 0) == doctest::Approx(16.0 / 255.0));
    CHECK(luminance_y(1, 1, 1) == doctest::Approx(235.0 / 255.0));

    // A chroma-only difference that keeps Y constant is invisible in Y mode.
    auto a = TensorF::constant({1, 2, 2, 3}, 0.5f);
    auto b = a;
    // Perturb r and g in a ratio that cancels in the luminance sum.
    const float dr = 0.04f;
    const float dg = -static_cast<float>(65.481 / 128.553) * dr;
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
            b(0, y, x, 0) += dr;
            b(0, y, x, 1) += dg;
        }
    const auto py = psnr(a, b, PsnrMode::y);
    const auto prgb = psnr(a, b, PsnrMode::rgb);
    REQUIRE(prgb.has_value());
    if (py.has_value()) CHECK(*py > *prgb + 60.0);  // near-cancellation in Y
    CHECK(*prgb < 40.0);
}

TEST_CASE("challenge score: reference operating points and monotonicity") {
    CHECK(challenge_score(29.81, 320.0) == doctest::Approx(240.2).epsilon(1.0 / 240.2));
    CHECK(challenge_score(29.82, 370.0) == doctest::Approx(210.6).epsilon(1.0 / 210.6));

    CHECK(challenge_score(30.0, 1000.0) == doctest::Approx(100.0));
    CHECK(challenge_score(30.5, 100.0) == doctest::Approx(2000.0));

    CHECK(challenge_score(31.0, 200.0) > challenge_score(30.0, 200.0));
    CHECK(challenge_score(30.0, 100.0) > challenge_score(30.0, 200.0));
    CHECK_THROWS_AS(challenge_score(30.0, 0.0), std::invalid_argument);
}

TEST_CASE("png round-trip is bit-exact for 8-bit RGB") {
    std::mt19937_64 rng(63);
    auto img = random_rgb(9, 13, rng);
    const auto path = temp_file("xcat_io_rgb.png");
    save_png(img, path.string());
    auto back = load_png(path.string());
    CHECK(back.shape() == img.shape());
    CHECK(back.data() == img.data());
    std::filesystem::remove(path);
}

TEST_CASE("png float view: quantizes to the nearest 8-bit code") {
    TensorF img(1, 1, 4, 3);
    for (int x = 0; x < 4; ++x)
        for (int c = 0; c < 3; ++c) img(0, 0, x, c) = (x * 3 + c) / 11.0f;
    const auto path = temp_file("xcat_io_f32.png");
    save_png_f32(img, path.string());
    auto back = load_png_f32(path.string());
    for (std::size_t i = 0; i < img.data().size(); ++i)
        CHECK(std::fabs(back.data()[i] - img.data()[i]) <= 0.5f / 255.0f + 1e-6f);
    std::filesystem::remove(path);
}

TEST_CASE("png loader: errors and grayscale promotion") {
    CHECK_THROWS_AS(load_png("/nonexistent/image.png"), FormatError);

    const auto junk = temp_file("xcat_io_junk.png");
    {
        std::ofstream f(junk, std::ios::binary);
        f << "this is not a png";
    }
    CHECK_THROWS_AS(load_png(junk.string()), FormatError);
    std::filesystem::remove(junk);

    CHECK_THROWS_AS(save_png(TensorU8(1, 2, 2, 1), temp_file("x.png").string()),
                    std::invalid_argument);
}

TEST_CASE("evaluate: per-image rows, means, and skip-with-warning") {
    std::mt19937_64 rng(64);
    auto m = build<float>(XcatConfig{}, 17);

    std::vector<ImagePair> pairs;
    for (int i = 0; i < 3; ++i) {
        ImagePair p;
        p.lr = TensorF(1, 6, 6, 3);
        std::uniform_real_distribution<float> dist(0.0f, 1.0f);
        for (auto& v : p.lr.data()) v = dist(rng);
        p.hr = i == 2 ? TensorF(1, 17, 18, 3) : TensorF(1, 18, 18, 3);  // bad pair last
        for (auto& v : p.hr.data()) v = dist(rng);
        p.id = "img" + std::to_string(i);
        pairs.push_back(std::move(p));
    }

    auto rep = evaluate(&m, nullptr, pairs, PsnrMode::rgb);
    CHECK(rep.rows.size() == 2);
    CHECK(rep.warnings.size() == 1);
    CHECK(rep.warnings[0].find("img2") != std::string::npos);
    REQUIRE(rep.mean_fp32.has_value());
    CHECK(*rep.mean_fp32 ==
          doctest::Approx((*rep.rows[0].psnr_fp32 + *rep.rows[1].psnr_fp32) / 2.0));
    CHECK_FALSE(rep.mean_uint8.has_value());

    // Both models at once fills both columns.
    auto qm = quantize_model(m, calibrate(m, {pairs[0].lr}));
    auto rep2 = evaluate(&m, &qm, pairs, PsnrMode::y);
    for (const auto& row : rep2.rows) {
        CHECK(row.psnr_fp32.has_value());
        CHECK(row.psnr_uint8.has_value());
    }
    CHECK(rep2.mean_uint8.has_value());

    CHECK_THROWS_AS(evaluate(nullptr, nullptr, pairs, PsnrMode::rgb), std::invalid_argument);
    CHECK_THROWS_AS(evaluate(&m, nullptr, {}, PsnrMode::rgb), std::invalid_argument);
}

TEST_CASE("evaluate: perfect reconstruction reports the infinite-PSNR signal") {
    // A zeroed model is exactly nearest-neighbor; feed it an HR image that is
    // the NN upsample of the LR input.
    auto m = build<float>(XcatConfig{}, 18);
    for (auto* w : m.layers())
        if (w->trainable) {
            std::fill(w->kernel.begin(), w->kernel.end(), 0.0f);
            std::fill(w->bias.begin(), w->bias.end(), 0.0f);
        }
    std::mt19937_64 rng(65);
    ImagePair p;
    p.lr = TensorF(1, 5, 5, 3);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    for (auto& v : p.lr.data()) v = dist(rng);
    p.hr = nearest_upsample_reference(p.lr, 3);
    p.id = "exact";

    auto rep = evaluate(&m, nullptr, {p}, PsnrMode::rgb);
    REQUIRE(rep.rows.size() == 1);
    CHECK(std::isinf(*rep.rows[0].psnr_fp32));
}
