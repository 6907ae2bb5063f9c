#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "fedkbp/errors.hpp"
#include "fedkbp/geometry.hpp"

namespace fedkbp {

// Dense 3D scalar field (dose in Gy, CT intensity, or a binary mask) with
// spacing metadata. Values are stored as 32-bit floats in x-fastest order.
// Grids are treated as immutable once constructed; derived grids are built
// as new values.
struct VoxelGrid {
    Dims3 dims;
    Spacing3 spacing_mm;
    std::vector<float> values;

    VoxelGrid() = default;

    VoxelGrid(Dims3 d, Spacing3 s, std::vector<float> v)
        : dims(d), spacing_mm(s), values(std::move(v)) {
        if (values.size() != dims.total()) {
            throw DataError("voxel grid value count " + std::to_string(values.size()) +
                            " does not match dims product " + std::to_string(dims.total()));
        }
        if (spacing_mm.sx <= 0.0 || spacing_mm.sy <= 0.0 || spacing_mm.sz <= 0.0) {
            throw DataError("voxel grid spacing components must be positive");
        }
    }

    static VoxelGrid zeros(Dims3 d, Spacing3 s) {
        return VoxelGrid(d, s, std::vector<float>(d.total(), 0.0f));
    }

    float at(int x, int y, int z) const { return values[linear_index(dims, x, y, z)]; }

    bool is_binary() const {
        for (float v : values)
            if (v != 0.0f && v != 1.0f) return false;
        return true;
    }

    std::size_t nonzero_count() const {
        std::size_t n = 0;
        for (float v : values)
            if (v != 0.0f) ++n;
        return n;
    }
};

}  // namespace fedkbp
