#pragma once

#include <map>
#include <string>
#include <vector>

#include "fedkbp/errors.hpp"
#include "fedkbp/roi.hpp"
#include "fedkbp/voxel_grid.hpp"

namespace fedkbp {

enum class Split { TRAIN, VALIDATE, TEST };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

// One treatment plan: CT, ROI masks, possible-dose mask and ground-truth dose
// on a shared grid. Immutable after construction.
struct Case {
    std::string id;
    VoxelGrid ct;
    std::map<std::string, VoxelGrid> roi_masks;  // keyed by catalog ROI name
    VoxelGrid possible_dose_mask;
    VoxelGrid dose;
    Split split = Split::TRAIN;

    // Validates the cross-grid invariants; throws DataError naming the case.
    void validate() const;

    bool has_roi(const std::string& name) const {
        auto it = roi_masks.find(name);
        return it != roi_masks.end() && it->second.nonzero_count() > 0;
    }
};

// Immutable in-memory case collection with id lookup. Shared by concurrent
// site workers, so it is never mutated after construction.
class CaseStore {
public:
    CaseStore() = default;
    explicit CaseStore(std::vector<Case> cases);

    const Case& get(const std::string& id) const;
    bool contains(const std::string& id) const { return index_.count(id) > 0; }
    std::size_t size() const { return cases_.size(); }
    const std::vector<Case>& all() const { return cases_; }

    // Case ids for one split, in ascending id order.
    std::vector<std::string> ids_for_split(Split split) const;

private:
    std::vector<Case> cases_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace fedkbp
