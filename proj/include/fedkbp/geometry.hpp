#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace fedkbp {

struct Dims3 {
    int nx = 0;
    int ny = 0;
    int nz = 0;

    std::size_t total() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
               static_cast<std::size_t>(nz);
    }

    bool operator==(const Dims3&) const = default;
};

struct Spacing3 {
    double sx = 1.0;
    double sy = 1.0;
    double sz = 1.0;

    double voxel_volume_mm3() const { return sx * sy * sz; }

    bool operator==(const Spacing3&) const = default;
};

// Canonical x-fastest linear voxel order: index = x + nx*(y + ny*z).
inline std::size_t linear_index(const Dims3& dims, int x, int y, int z) {
    if (x < 0 || x >= dims.nx || y < 0 || y >= dims.ny || z < 0 || z >= dims.nz) {
        throw std::out_of_range("voxel coordinate (" + std::to_string(x) + "," +
                                std::to_string(y) + "," + std::to_string(z) +
                                ") out of bounds for grid " + std::to_string(dims.nx) +
                                "x" + std::to_string(dims.ny) + "x" + std::to_string(dims.nz));
    }
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims.nx) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(dims.ny) * static_cast<std::size_t>(z));
}

}  // namespace fedkbp
