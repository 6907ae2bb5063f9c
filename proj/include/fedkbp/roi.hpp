#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace fedkbp {

enum class RoiKind { OAR, TARGET };

// Region-of-interest label. The catalog below is the closed set used by the
// head-and-neck planning task: seven organs at risk plus three prescription
// targets (70/63/56 Gy).
struct RoiLabel {
    std::string name;
    RoiKind kind = RoiKind::OAR;
    std::optional<double> prescription_gy;  // TARGET only

    bool operator==(const RoiLabel&) const = default;
};

inline constexpr int kNumOars = 7;
inline constexpr int kNumTargets = 3;
inline constexpr int kNumRois = kNumOars + kNumTargets;

// Canonical ROI order. OARs first, then targets by descending prescription.
// This order also fixes the model input channel layout.
const std::array<RoiLabel, kNumRois>& roi_catalog();

// Catalog index of `name`, or -1 when the name is not a known ROI.
int roi_catalog_index(std::string_view name);

bool is_known_roi(std::string_view name);
bool is_oar_name(std::string_view name);
bool is_target_name(std::string_view name);

// Looks up the catalog entry; throws DataError for unknown names.
const RoiLabel& roi_by_name(std::string_view name);

}  // namespace fedkbp
