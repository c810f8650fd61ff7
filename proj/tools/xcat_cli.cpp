// Batch command-line surface: train, infer, quantize, search-rep, eval,
// ablate and count. Every run writes a JSON manifest next to its outputs.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xcat/eval.hpp"
#include "xcat/image_io.hpp"
#include "xcat/presets.hpp"
#include "xcat/quant.hpp"
#include "xcat/serialize.hpp"
#include "xcat/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xcat;

namespace {

constexpr const char* kToolVersion = "1.0.0";

const char* to_string(MixMode m) {
    switch (m) {
        case MixMode::cross_concat: return "cross_concat";
        case MixMode::straight_concat: return "straight_concat";
        case MixMode::conv1x1: return "conv1x1";
    }
    return "?";
}

const char* to_string(BlockKind b) {
    return b == BlockKind::hxblock ? "hxblock" : "plain_conv3x3";
}

const char* to_string(PostBlockConv p) {
    switch (p) {
        case PostBlockConv::conv3x3: return "conv3x3";
        case PostBlockConv::conv1x1: return "conv1x1";
        case PostBlockConv::none: return "none";
    }
    return "?";
}

json config_json(const XcatConfig& c) {
    return json{{"m", c.m},
                {"split_x", c.split_x},
                {"split_y", c.split_y},
                {"k0", c.k0},
                {"k1", c.k1},
                {"mix_mode", to_string(c.mix_mode)},
                {"rotate_direction",
                 c.rotate_direction == RotateDirection::forward ? "forward" : "backward"},
                {"block_kind", to_string(c.block_kind)},
                {"post_block_conv", to_string(c.post_block_conv)},
                {"merge_mode", c.merge_mode == MergeMode::add ? "add" : "concat"},
                {"scale", c.scale},
                {"image_channels", c.image_channels},
                {"hidden_activation", c.hidden_activation}};
}

// Written next to the primary output so a run can be reproduced exactly.
void write_manifest(const std::string& primary_output, const std::string& command,
                    const json& config, std::uint64_t seed,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    json m{{"command", command}, {"config", config},       {"seed", seed},
           {"inputs", inputs},   {"outputs", outputs},     {"tool_version", kToolVersion}};
    const fs::path path = fs::path(primary_output).string() + ".manifest.json";
    std::ofstream f(path);
    f << m.dump(2) << "\n";
    if (!f) throw std::runtime_error("cannot write manifest " + path.string());
}

std::vector<fs::path> png_files(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no .png files in " + dir);
    return files;
}

// Paired dataset from a directory: either lr/ + hr/ subdirectories matched by
// filename, or a flat directory of HR images degraded by bicubic decimation.
std::vector<ImagePair> load_pairs(const std::string& dir, int scale) {
    std::vector<ImagePair> pairs;
    const fs::path lr_dir = fs::path(dir) / "lr", hr_dir = fs::path(dir) / "hr";
    if (fs::is_directory(lr_dir) && fs::is_directory(hr_dir)) {
        for (const auto& hp : png_files(hr_dir.string())) {
            const fs::path lp = lr_dir / hp.filename();
            if (!fs::exists(lp))
                throw std::runtime_error("no LR image for " + hp.filename().string());
            ImagePair p;
            p.lr = load_png_f32(lp.string());
            p.hr = load_png_f32(hp.string());
            p.id = hp.stem().string();
            pairs.push_back(std::move(p));
        }
        return pairs;
    }
    for (const auto& hp : png_files(dir)) {
        auto hr = load_png_f32(hp.string());
        const int h = hr.h() - hr.h() % scale, w = hr.w() - hr.w() % scale;
        if (h < scale || w < scale)
            throw std::runtime_error(hp.filename().string() + " is smaller than the scale");
        ImagePair p;
        p.hr = crop(hr, 0, 0, h, w);
        p.lr = bicubic_downsample(p.hr, scale);
        p.id = hp.stem().string();
        pairs.push_back(std::move(p));
    }
    return pairs;
}

void write_log_csv(const std::string& path, const std::vector<EpochLog>& log) {
    std::ofstream f(path);
    f << "epoch,lr,mean_loss,seconds\n";
    for (const auto& e : log)
        f << e.epoch << "," << e.lr << "," << e.mean_loss << "," << e.seconds << "\n";
    if (!f) throw std::runtime_error("cannot write " + path);
}

struct TrainArgs {
    std::string data, out = "model.hxsr", config = "xcat-baseline", from, log_csv;
    int epochs = 0, minibatches = 0, batch = 0, crop = 0;
    bool stage2 = false;
    std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a) {
    XcatConfig cfg = preset_config(a.config);
    Model<float> model =
        a.from.empty() ? build<float>(cfg, a.seed) : load_weights(a.from);
    if (!a.from.empty()) cfg = model.config;

    std::vector<std::pair<TensorF, TensorF>> data;
    for (auto& p : load_pairs(a.data, cfg.scale))
        data.emplace_back(std::move(p.lr), std::move(p.hr));

    auto apply_overrides = [&](TrainConfig tc) {
        if (a.epochs > 0) tc.epochs = a.epochs;
        if (a.minibatches > 0) tc.minibatches_per_epoch = a.minibatches;
        if (a.batch > 0) tc.batch_size = a.batch;
        if (a.crop > 0) tc.crop_hr = a.crop;
        tc.seed = a.seed;
        return tc;
    };

    std::vector<EpochLog> log;
    if (a.from.empty()) {
        auto l = train(model, apply_overrides(TrainConfig::stage_one()), data);
        log.insert(log.end(), l.begin(), l.end());
    }
    if (a.stage2) {
        auto l = train(model, apply_overrides(TrainConfig::stage_two()), data);
        log.insert(log.end(), l.begin(), l.end());
    }
    if (log.empty())
        throw std::runtime_error("nothing to do: --from without --stage2");

    save_weights(model, a.out);
    const std::string log_path = a.log_csv.empty() ? a.out + ".log.csv" : a.log_csv;
    write_log_csv(log_path, log);
    write_manifest(a.out, "train", config_json(cfg), a.seed, {a.data, a.from},
                   {a.out, log_path});
    std::printf("wrote %s (%zu epochs, final loss %.6f)\n", a.out.c_str(), log.size(),
                log.back().mean_loss);
    return 0;
}

struct InferArgs {
    std::string model, input, output = "sr.png";
    bool quantized = false;
    std::uint64_t seed = 0;
};

int cmd_infer(const InferArgs& a) {
    json cfg;
    if (a.quantized) {
        const auto qm = load_qmodel(a.model);
        save_png(qforward(qm, load_png(a.input)), a.output);
        cfg = config_json(qm.config);
    } else {
        const auto m = load_weights(a.model);
        save_png_f32(forward(m, load_png_f32(a.input)), a.output);
        cfg = config_json(m.config);
    }
    write_manifest(a.output, "infer", cfg, a.seed, {a.model, a.input}, {a.output});
    std::printf("wrote %s\n", a.output.c_str());
    return 0;
}

struct QuantizeArgs {
    std::string model, out = "model.hxq8";
    std::vector<std::string> rep;
    std::uint64_t seed = 0;
};

int cmd_quantize(const QuantizeArgs& a) {
    const auto m = load_weights(a.model);
    std::vector<TensorF> images;
    for (const auto& r : a.rep) images.push_back(load_png_f32(r));
    const auto qm = quantize_model(m, calibrate(m, images));
    save_qmodel(qm, a.out);
    std::vector<std::string> inputs{a.model};
    inputs.insert(inputs.end(), a.rep.begin(), a.rep.end());
    write_manifest(a.out, "quantize", config_json(m.config), a.seed, inputs, {a.out});
    std::printf("wrote %s\n", a.out.c_str());
    return 0;
}

struct SearchArgs {
    std::string model, candidates, val, out = "model.hxq8", report;
    std::string metric = "rgb";
    std::uint64_t seed = 0;
};

int cmd_search_rep(const SearchArgs& a) {
    const auto m = load_weights(a.model);
    const auto files = png_files(a.candidates);
    std::vector<TensorF> cands;
    for (const auto& f : files) cands.push_back(load_png_f32(f.string()));
    const auto pairs = load_pairs(a.val, m.config.scale);
    const auto mode = a.metric == "y" ? PsnrMode::y : PsnrMode::rgb;

    const auto res = representative_search(m, cands, pairs, mode);
    const auto& best = cands[static_cast<std::size_t>(res.best_index)];
    const auto qm = quantize_model(m, calibrate(m, {best}));
    save_qmodel(qm, a.out);

    const std::string report = a.report.empty() ? a.out + ".search.csv" : a.report;
    {
        std::ofstream f(report);
        f << "candidate,mean_psnr,chosen\n";
        for (std::size_t i = 0; i < files.size(); ++i)
            f << files[i].filename().string() << "," << res.scores[i] << ","
              << (static_cast<int>(i) == res.best_index ? 1 : 0) << "\n";
        if (!f) throw std::runtime_error("cannot write " + report);
    }
    write_manifest(a.out, "search-rep", config_json(m.config), a.seed,
                   {a.model, a.candidates, a.val}, {a.out, report});
    std::printf("chose %s (%.4f dB), wrote %s and %s\n",
                files[static_cast<std::size_t>(res.best_index)].filename().c_str(),
                res.scores[static_cast<std::size_t>(res.best_index)], a.out.c_str(),
                report.c_str());
    return 0;
}

struct EvalArgs {
    std::string model, quantized, data, report, metric = "rgb";
    double runtime_ms = 0.0;
    std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
    if (a.model.empty() && a.quantized.empty())
        throw std::runtime_error("need --model and/or --quantized");
    std::optional<Model<float>> m;
    std::optional<QModel> qm;
    if (!a.model.empty()) m = load_weights(a.model);
    if (!a.quantized.empty()) qm = load_qmodel(a.quantized);
    const auto& cfg = m ? m->config : qm->config;

    const auto pairs = load_pairs(a.data, cfg.scale);
    const auto mode = a.metric == "y" ? PsnrMode::y : PsnrMode::rgb;
    const auto rep = evaluate(m ? &*m : nullptr, qm ? &*qm : nullptr, pairs, mode);
    for (const auto& w : rep.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

    const std::string report =
        a.report.empty() ? (a.model.empty() ? a.quantized : a.model) + ".eval.csv" : a.report;
    {
        std::ofstream f(report);
        f << "id,psnr_fp32,psnr_uint8\n";
        for (const auto& r : rep.rows) {
            f << r.id << ",";
            if (r.psnr_fp32) f << *r.psnr_fp32;
            f << ",";
            if (r.psnr_uint8) f << *r.psnr_uint8;
            f << "\n";
        }
        if (!f) throw std::runtime_error("cannot write " + report);
    }
    if (rep.mean_fp32) std::printf("mean fp32 PSNR: %.4f dB\n", *rep.mean_fp32);
    if (rep.mean_uint8) std::printf("mean uint8 PSNR: %.4f dB\n", *rep.mean_uint8);
    if (a.runtime_ms > 0.0 && rep.mean_uint8)
        std::printf("challenge score @ %.0f ms: %.1f\n", a.runtime_ms,
                    challenge_score(*rep.mean_uint8, a.runtime_ms));
    write_manifest(report, "eval", config_json(cfg), a.seed,
                   {a.model, a.quantized, a.data}, {report});
    return 0;
}

struct AblateArgs {
    std::string rows, out;
    int height = 360, width = 640;
    std::uint64_t seed = 0;
};

int cmd_ablate(const AblateArgs& a) {
    std::vector<std::string> names;
    if (a.rows.empty()) {
        names = preset_names();
    } else {
        std::string token;
        for (std::istringstream ss(a.rows); std::getline(ss, token, ',');)
            names.push_back(token);
    }
    std::ostringstream table;
    table << "name,trainable_params,fixed_params,macs\n";
    for (const auto& name : names) {
        const auto cfg = preset_config(name);  // throws on unknown names
        const auto pc = param_count(cfg);
        table << name << "," << pc.trainable << "," << pc.fixed << ","
              << mac_count(cfg, a.height, a.width) << "\n";
    }
    if (a.out.empty()) {
        std::fputs(table.str().c_str(), stdout);
    } else {
        std::ofstream f(a.out);
        f << table.str();
        if (!f) throw std::runtime_error("cannot write " + a.out);
        write_manifest(a.out, "ablate", json{{"rows", names}}, a.seed, {}, {a.out});
    }
    return 0;
}

struct CountArgs {
    std::string config = "xcat-baseline";
    int height = 360, width = 640;
};

int cmd_count(const CountArgs& a) {
    const auto cfg = preset_config(a.config);
    const auto pc = param_count(cfg);
    std::printf("config: %s\ntrainable parameters: %lld\nfixed parameters: %lld\n"
                "MACs @ %dx%d: %lld\n",
                a.config.c_str(), static_cast<long long>(pc.trainable),
                static_cast<long long>(pc.fixed), a.height, a.width,
                static_cast<long long>(mac_count(cfg, a.height, a.width)));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"XCAT super-resolution toolkit"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    bool deterministic = false;
    app.add_option("--seed", seed, "global RNG seed")->capture_default_str();
    app.add_flag("--deterministic", deterministic,
                 "disable all internal parallelism (runs are single-threaded anyway)");

    TrainArgs ta;
    auto* t = app.add_subcommand("train", "train a model, optionally both stages");
    t->add_option("--data", ta.data, "dataset directory (lr/+hr/ pairs or flat HR PNGs)")
        ->required();
    t->add_option("--out", ta.out, "checkpoint output path")->capture_default_str();
    t->add_option("--config", ta.config, "named architecture preset")->capture_default_str();
    t->add_option("--epochs", ta.epochs, "override epochs per stage");
    t->add_option("--minibatches", ta.minibatches, "override minibatches per epoch");
    t->add_option("--batch", ta.batch, "override batch size");
    t->add_option("--crop", ta.crop, "override HR crop size");
    t->add_option("--from", ta.from, "resume from an existing checkpoint");
    t->add_flag("--stage2", ta.stage2, "also run the fine-tuning stage");
    t->add_option("--log", ta.log_csv, "CSV log path (default: <out>.log.csv)");

    InferArgs ia;
    auto* inf = app.add_subcommand("infer", "super-resolve one image");
    inf->add_option("--model", ia.model, "model file (.hxsr, or .hxq8 with --quantized)")
        ->required();
    inf->add_option("--input", ia.input, "LR input PNG")->required();
    inf->add_option("--output", ia.output, "SR output PNG")->capture_default_str();
    inf->add_flag("--quantized", ia.quantized, "run the integer pipeline");

    QuantizeArgs qa;
    auto* q = app.add_subcommand("quantize", "post-training uint8 quantization");
    q->add_option("--model", qa.model, "float checkpoint")->required();
    q->add_option("--rep", qa.rep, "representative calibration image(s)")->required();
    q->add_option("--out", qa.out, "quantized model output")->capture_default_str();

    SearchArgs sa;
    auto* s = app.add_subcommand("search-rep",
                                 "search for the best single calibration image");
    s->add_option("--model", sa.model, "float checkpoint")->required();
    s->add_option("--candidates", sa.candidates, "directory of candidate PNGs")->required();
    s->add_option("--val", sa.val, "validation dataset directory")->required();
    s->add_option("--out", sa.out, "quantized model output")->capture_default_str();
    s->add_option("--report", sa.report, "per-candidate CSV (default: <out>.search.csv)");
    s->add_option("--metric", sa.metric, "selection metric: rgb or y")
        ->check(CLI::IsMember({"rgb", "y"}))
        ->capture_default_str();

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "PSNR report over a paired dataset");
    ev->add_option("--model", ea.model, "float checkpoint");
    ev->add_option("--quantized", ea.quantized, "quantized model");
    ev->add_option("--data", ea.data, "dataset directory")->required();
    ev->add_option("--report", ea.report, "CSV output path");
    ev->add_option("--metric", ea.metric, "psnr metric: rgb or y")
        ->check(CLI::IsMember({"rgb", "y"}))
        ->capture_default_str();
    ev->add_option("--runtime-ms", ea.runtime_ms,
                   "device runtime for the challenge score");

    AblateArgs aa;
    auto* ab = app.add_subcommand("ablate", "param/MAC table over named presets");
    ab->add_option("--rows", aa.rows, "comma-separated preset names (default: all)");
    ab->add_option("--out", aa.out, "CSV output path (default: stdout)");
    ab->add_option("--height", aa.height, "LR height for MAC counts")->capture_default_str();
    ab->add_option("--width", aa.width, "LR width for MAC counts")->capture_default_str();

    CountArgs ca;
    auto* cn = app.add_subcommand("count", "parameter and MAC accounting");
    cn->add_option("--config", ca.config, "named architecture preset")->capture_default_str();
    cn->add_option("--height", ca.height, "LR height")->capture_default_str();
    cn->add_option("--width", ca.width, "LR width")->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    (void)deterministic;  // single-threaded by construction

    ta.seed = ia.seed = qa.seed = sa.seed = ea.seed = aa.seed = seed;
    try {
        if (*t) return cmd_train(ta);
        if (*inf) return cmd_infer(ia);
        if (*q) return cmd_quantize(qa);
        if (*s) return cmd_search_rep(sa);
        if (*ev) return cmd_eval(ea);
        if (*ab) return cmd_ablate(aa);
        if (*cn) return cmd_count(ca);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
