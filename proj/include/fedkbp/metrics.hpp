#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fedkbp/case.hpp"
#include "fedkbp/model.hpp"
#include "fedkbp/voxel_grid.hpp"

namespace fedkbp {

// DVH summary statistics. OARs are scored with D_MEAN and D_0_1CC; targets
// with the D_1 / D_95 / D_99 percentile doses.
enum class DvhKind { D_MEAN, D_0_1CC, D_1, D_95, D_99 };

std::string dvh_kind_name(DvhKind kind);
bool criterion_applicable(RoiKind roi_kind, DvhKind kind);
const std::vector<DvhKind>& criteria_for(RoiKind roi_kind);

struct DvhCriterion {
    RoiLabel roi;
    DvhKind kind = DvhKind::D_MEAN;
    double value_gy = 0.0;

    DvhCriterion(RoiLabel r, DvhKind k, double v);
};

// One DVH statistic of `dose` over the ROI voxels.
// D_MEAN: mean ROI dose. D_x: the ceil(x/100 * N)-th largest ROI dose.
// D_0_1CC: mean of the hottest ceil(100 mm^3 / voxel_volume) ROI voxels.
double dvh_value(const VoxelGrid& dose, const VoxelGrid& roi_mask, DvhKind kind,
                 const Spacing3& spacing_mm);

// All applicable criteria of a dose field over a case's ROI set, in catalog
// order. ROIs with empty or missing masks contribute no entries.
std::vector<DvhCriterion> evaluate_dvh_criteria(const VoxelGrid& dose,
                                                const std::map<std::string, VoxelGrid>& roi_masks,
                                                const Spacing3& spacing_mm);

// Mean absolute voxel dose error inside the possible-dose mask, in Gy.
double dose_score_case(const VoxelGrid& pred, const VoxelGrid& truth,
                       const VoxelGrid& possible_dose_mask);

// Mean absolute criterion error over all applicable (roi, criterion) pairs.
double dvh_score_case(const VoxelGrid& pred, const VoxelGrid& truth,
                      const std::map<std::string, VoxelGrid>& roi_masks,
                      const Spacing3& spacing_mm);

struct ScoreReport {
    double dose_score = 0.0;
    double dvh_score = 0.0;
    std::map<std::string, double> per_case_dose;
    std::map<std::string, double> per_case_dvh;
};

// Clamped forward pass per case, then per-case dose/DVH scores and their
// means over the test set (ascending case id order).
ScoreReport evaluate_model(const ModelConfig& cfg, const ParamVector& params,
                           const std::vector<const Case*>& test_cases);

// Arithmetic mean of the site reports; per-case maps are averaged case-wise.
// All reports must cover the same case set.
ScoreReport average_site_reports(const std::vector<ScoreReport>& reports);

// Score output CSV (Table-style layout): header
// scope,scenario,distribution,dose_score,dvh_score with 6-decimal values.
struct ScoreRow {
    std::string scope;         // "global", "average" or "site<k>"
    std::string scenario;      // "pm", "im", "fedavg"
    std::string distribution;  // "iid", "noniid" or "-"
    double dose_score = 0.0;
    double dvh_score = 0.0;
};

std::string format_scores_csv(const std::vector<ScoreRow>& rows);
void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows);

}  // namespace fedkbp
