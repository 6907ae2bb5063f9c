#include "fedkbp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>

namespace fedkbp {

std::string dvh_kind_name(DvhKind kind) {
    switch (kind) {
        case DvhKind::D_MEAN: return "D_mean";
        case DvhKind::D_0_1CC: return "D_0.1cc";
        case DvhKind::D_1: return "D_1";
        case DvhKind::D_95: return "D_95";
        case DvhKind::D_99: return "D_99";
    }
    throw EvalError("invalid DVH kind");
}

const std::vector<DvhKind>& criteria_for(RoiKind roi_kind) {
    static const std::vector<DvhKind> oar = {DvhKind::D_MEAN, DvhKind::D_0_1CC};
    static const std::vector<DvhKind> target = {DvhKind::D_1, DvhKind::D_95, DvhKind::D_99};
    return roi_kind == RoiKind::OAR ? oar : target;
}

bool criterion_applicable(RoiKind roi_kind, DvhKind kind) {
    const auto& allowed = criteria_for(roi_kind);
    return std::find(allowed.begin(), allowed.end(), kind) != allowed.end();
}

DvhCriterion::DvhCriterion(RoiLabel r, DvhKind k, double v)
    : roi(std::move(r)), kind(k), value_gy(v) {
    if (!criterion_applicable(roi.kind, kind))
        throw EvalError("criterion " + dvh_kind_name(kind) + " not applicable to ROI " + roi.name);
}

namespace {

std::vector<double> roi_doses_sorted_desc(const VoxelGrid& dose, const VoxelGrid& roi_mask) {
    if (!(dose.dims == roi_mask.dims)) throw EvalError("dose and ROI mask dims differ");
    std::vector<double> values;
    for (std::size_t i = 0; i < roi_mask.values.size(); ++i)
        if (roi_mask.values[i] != 0.0f) values.push_back(static_cast<double>(dose.values[i]));
    if (values.empty()) throw EvalError("DVH value requested for an empty ROI");
    std::sort(values.begin(), values.end(), std::greater<>());
    return values;
}

}  // namespace

double dvh_value(const VoxelGrid& dose, const VoxelGrid& roi_mask, DvhKind kind,
                 const Spacing3& spacing_mm) {
    const auto sorted = roi_doses_sorted_desc(dose, roi_mask);
    const std::size_t n = sorted.size();
    switch (kind) {
        case DvhKind::D_MEAN: {
            double sum = 0.0;
            for (double v : sorted) sum += v;
            return sum / static_cast<double>(n);
        }
        case DvhKind::D_0_1CC: {
            const double voxel_volume = spacing_mm.voxel_volume_mm3();
            auto m = static_cast<std::size_t>(std::ceil(100.0 / voxel_volume));
            m = std::clamp<std::size_t>(m, 1, n);
            double sum = 0.0;
            for (std::size_t i = 0; i < m; ++i) sum += sorted[i];
            return sum / static_cast<double>(m);
        }
        case DvhKind::D_1:
        case DvhKind::D_95:
        case DvhKind::D_99: {
            const std::size_t x = kind == DvhKind::D_1 ? 1 : (kind == DvhKind::D_95 ? 95 : 99);
            // k-th largest with k = ceil(x/100 * n); no interpolation.
            const std::size_t k = (x * n + 99) / 100;
            return sorted[k - 1];
        }
    }
    throw EvalError("invalid DVH kind");
}

std::vector<DvhCriterion> evaluate_dvh_criteria(const VoxelGrid& dose,
                                                const std::map<std::string, VoxelGrid>& roi_masks,
                                                const Spacing3& spacing_mm) {
    std::vector<DvhCriterion> out;
    for (const auto& label : roi_catalog()) {
        const auto it = roi_masks.find(label.name);
        if (it == roi_masks.end() || it->second.nonzero_count() == 0) continue;
        for (DvhKind kind : criteria_for(label.kind))
            out.emplace_back(label, kind, dvh_value(dose, it->second, kind, spacing_mm));
    }
    return out;
}

double dose_score_case(const VoxelGrid& pred, const VoxelGrid& truth,
                       const VoxelGrid& possible_dose_mask) {
    if (!(pred.dims == truth.dims) || !(pred.dims == possible_dose_mask.dims))
        throw EvalError("dose score grids must share dims");
    double sum = 0.0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < possible_dose_mask.values.size(); ++i) {
        if (possible_dose_mask.values[i] == 0.0f) continue;
        sum += std::abs(static_cast<double>(pred.values[i]) - static_cast<double>(truth.values[i]));
        ++m;
    }
    if (m == 0) throw EvalError("dose score mask is empty");
    return sum / static_cast<double>(m);
}

double dvh_score_case(const VoxelGrid& pred, const VoxelGrid& truth,
                      const std::map<std::string, VoxelGrid>& roi_masks,
                      const Spacing3& spacing_mm) {
    const auto pred_criteria = evaluate_dvh_criteria(pred, roi_masks, spacing_mm);
    const auto truth_criteria = evaluate_dvh_criteria(truth, roi_masks, spacing_mm);
    if (pred_criteria.empty())
        throw EvalError("DVH score requested for a case with no applicable criteria");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred_criteria.size(); ++i)
        sum += std::abs(pred_criteria[i].value_gy - truth_criteria[i].value_gy);
    return sum / static_cast<double>(pred_criteria.size());
}

ScoreReport evaluate_model(const ModelConfig& cfg, const ParamVector& params,
                           const std::vector<const Case*>& test_cases) {
    if (test_cases.empty()) throw EvalError("evaluate_model requires a non-empty test set");

    // Ascending case id order for a reproducible aggregation order.
    std::vector<const Case*> ordered = test_cases;
    std::sort(ordered.begin(), ordered.end(),
              [](const Case* a, const Case* b) { return a->id < b->id; });

    ScoreReport report;
    for (const Case* c : ordered) {
        try {
            const VoxelGrid pred = clamp_nonnegative(forward(cfg, params, stack_case_input(*c)));
            report.per_case_dose[c->id] = dose_score_case(pred, c->dose, c->possible_dose_mask);
            report.per_case_dvh[c->id] =
                dvh_score_case(pred, c->dose, c->roi_masks, c->ct.spacing_mm);
        } catch (const Error& e) {
            throw EvalError("evaluating case " + c->id + ": " + e.what());
        }
    }
    double dose_sum = 0.0, dvh_sum = 0.0;
    for (const auto& [id, v] : report.per_case_dose) dose_sum += v;
    for (const auto& [id, v] : report.per_case_dvh) dvh_sum += v;
    report.dose_score = dose_sum / static_cast<double>(report.per_case_dose.size());
    report.dvh_score = dvh_sum / static_cast<double>(report.per_case_dvh.size());
    return report;
}

ScoreReport average_site_reports(const std::vector<ScoreReport>& reports) {
    if (reports.empty()) throw EvalError("average_site_reports requires at least one report");
    const auto& first = reports.front();
    for (const auto& r : reports) {
        if (r.per_case_dose.size() != first.per_case_dose.size())
            throw EvalError("site reports cover different case sets");
        for (const auto& [id, v] : first.per_case_dose)
            if (r.per_case_dose.find(id) == r.per_case_dose.end())
                throw EvalError("site reports cover different case sets (missing " + id + ")");
    }

    ScoreReport avg;
    const double inv = 1.0 / static_cast<double>(reports.size());
    for (const auto& [id, unused] : first.per_case_dose) {
        double dose = 0.0, dvh = 0.0;
        for (const auto& r : reports) {
            dose += r.per_case_dose.at(id);
            dvh += r.per_case_dvh.at(id);
        }
        avg.per_case_dose[id] = dose * inv;
        avg.per_case_dvh[id] = dvh * inv;
    }
    double dose = 0.0, dvh = 0.0;
    for (const auto& r : reports) {
        dose += r.dose_score;
        dvh += r.dvh_score;
    }
    avg.dose_score = dose * inv;
    avg.dvh_score = dvh * inv;
    return avg;
}

std::string format_scores_csv(const std::vector<ScoreRow>& rows) {
    std::string out = "scope,scenario,distribution,dose_score,dvh_score\n";
    char buf[128];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f", row.dose_score, row.dvh_score);
        out += row.scope + "," + row.scenario + "," + row.distribution + "," + buf + "\n";
    }
    return out;
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open scores CSV for writing: " + path.string());
    out << format_scores_csv(rows);
    if (!out) throw DataError("failed writing scores CSV: " + path.string());
}

}  // namespace fedkbp
