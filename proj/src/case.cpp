#include "fedkbp/case.hpp"

#include <algorithm>

namespace fedkbp {

std::string split_name(Split s) {
    switch (s) {
        case Split::TRAIN: return "train";
        case Split::VALIDATE: return "validate";
        case Split::TEST: return "test";
    }
    throw ConfigError("invalid split enum value");
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::TRAIN;
    if (name == "validate" || name == "validation") return Split::VALIDATE;
    if (name == "test") return Split::TEST;
    throw DataError("unknown split tag: " + name);
}

void Case::validate() const {
    auto check_grid = [&](const VoxelGrid& g, const std::string& what) {
        if (!(g.dims == ct.dims))
            throw DataError("case " + id + ": " + what + " dims differ from ct dims");
        if (!(g.spacing_mm == ct.spacing_mm))
            throw DataError("case " + id + ": " + what + " spacing differs from ct spacing");
    };
    check_grid(dose, "dose");
    check_grid(possible_dose_mask, "possible_dose_mask");
    if (!possible_dose_mask.is_binary())
        throw DataError("case " + id + ": possible_dose_mask is not binary");
    for (const auto& [name, mask] : roi_masks) {
        if (!is_known_roi(name)) throw DataError("case " + id + ": unknown ROI " + name);
        check_grid(mask, "roi " + name);
        if (!mask.is_binary()) throw DataError("case " + id + ": ROI mask " + name + " is not binary");
    }
    for (float v : dose.values) {
        if (v < 0.0f) throw DataError("case " + id + ": negative dose value");
    }
}

CaseStore::CaseStore(std::vector<Case> cases) : cases_(std::move(cases)) {
    std::sort(cases_.begin(), cases_.end(),
              [](const Case& a, const Case& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < cases_.size(); ++i) {
        auto [it, inserted] = index_.emplace(cases_[i].id, i);
        if (!inserted) throw DataError("duplicate case id: " + cases_[i].id);
    }
}

const Case& CaseStore::get(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw DataError("no such case id: " + id);
    return cases_[it->second];
}

std::vector<std::string> CaseStore::ids_for_split(Split split) const {
    std::vector<std::string> ids;
    for (const auto& c : cases_)
        if (c.split == split) ids.push_back(c.id);
    return ids;  // cases_ is sorted by id already
}

}  // namespace fedkbp
