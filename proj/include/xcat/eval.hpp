#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "xcat/metrics.hpp"
#include "xcat/model.hpp"
#include "xcat/quant.hpp"

namespace xcat {

struct EvalRow {
    std::string id;
    // nullopt means not evaluated; +inf encodes the infinite-PSNR signal.
    std::optional<double> psnr_fp32;
    std::optional<double> psnr_uint8;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::optional<double> mean_fp32;
    std::optional<double> mean_uint8;
    std::vector<std::string> warnings;
};

// Per-image and mean PSNR for a float model, a quantized model, or both.
// Pairs with mismatched dimensions are skipped with a warning, not fatal.
inline EvalReport evaluate(const Model<float>* model, const QModel* qm,
                           const std::vector<ImagePair>& pairs, PsnrMode mode) {
    if (!model && !qm) throw std::invalid_argument("evaluate: no model given");
    if (pairs.empty()) throw std::invalid_argument("evaluate: no image pairs");
    const int scale = model ? model->config.scale : qm->config.scale;

    EvalReport rep;
    double sum_f = 0.0, sum_q = 0.0;
    int count = 0;
    for (const auto& p : pairs) {
        if (p.hr.h() != p.lr.h() * scale || p.hr.w() != p.lr.w() * scale) {
            rep.warnings.push_back(p.id + ": HR is not " + std::to_string(scale) +
                                   "x the LR dimensions, skipped");
            continue;
        }
        EvalRow row;
        row.id = p.id;
        if (model) {
            const auto sr = forward(*model, p.lr);
            const auto db = psnr(sr, p.hr, mode);
            row.psnr_fp32 = db ? *db : std::numeric_limits<double>::infinity();
            sum_f += *row.psnr_fp32;
        }
        if (qm) {
            const auto sr = from_codes(qforward(*qm, to_codes(p.lr)));
            const auto db = psnr(sr, p.hr, mode);
            row.psnr_uint8 = db ? *db : std::numeric_limits<double>::infinity();
            sum_q += *row.psnr_uint8;
        }
        rep.rows.push_back(std::move(row));
        ++count;
    }
    if (count > 0) {
        if (model) rep.mean_fp32 = sum_f / count;
        if (qm) rep.mean_uint8 = sum_q / count;
    }
    return rep;
}

}  // namespace xcat
