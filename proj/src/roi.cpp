#include "fedkbp/roi.hpp"

#include "fedkbp/errors.hpp"

namespace fedkbp {

const std::array<RoiLabel, kNumRois>& roi_catalog() {
    static const std::array<RoiLabel, kNumRois> catalog = {{
        {"Brainstem", RoiKind::OAR, std::nullopt},
        {"RightParotid", RoiKind::OAR, std::nullopt},
        {"LeftParotid", RoiKind::OAR, std::nullopt},
        {"SpinalCord", RoiKind::OAR, std::nullopt},
        {"Larynx", RoiKind::OAR, std::nullopt},
        {"Mandible", RoiKind::OAR, std::nullopt},
        {"Esophagus", RoiKind::OAR, std::nullopt},
        {"PTV70", RoiKind::TARGET, 70.0},
        {"PTV63", RoiKind::TARGET, 63.0},
        {"PTV56", RoiKind::TARGET, 56.0},
    }};
    return catalog;
}

int roi_catalog_index(std::string_view name) {
    const auto& catalog = roi_catalog();
    for (int i = 0; i < kNumRois; ++i) {
        if (catalog[static_cast<std::size_t>(i)].name == name) return i;
    }
    return -1;
}

bool is_known_roi(std::string_view name) { return roi_catalog_index(name) >= 0; }

bool is_oar_name(std::string_view name) {
    const int i = roi_catalog_index(name);
    return i >= 0 && i < kNumOars;
}

bool is_target_name(std::string_view name) {
    return roi_catalog_index(name) >= kNumOars;
}

const RoiLabel& roi_by_name(std::string_view name) {
    const int i = roi_catalog_index(name);
    if (i < 0) throw DataError("unknown ROI name: " + std::string(name));
    return roi_catalog()[static_cast<std::size_t>(i)];
}

}  // namespace fedkbp
