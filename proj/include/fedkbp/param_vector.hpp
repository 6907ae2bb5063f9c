#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedkbp/errors.hpp"

namespace fedkbp {

struct LayerSpec {
    std::string name;
    std::vector<std::int64_t> shape;

    std::int64_t count() const {
        std::int64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }

    bool operator==(const LayerSpec&) const = default;
};

// Flat model parameter array with a layer-shape manifest. This is the unit
// exchanged by the federation protocol: 32-bit values on the wire and in
// memory, with arithmetic carried out in 64-bit and rounded once.
struct ParamVector {
    std::vector<LayerSpec> manifest;
    std::vector<float> data;

    ParamVector() = default;
    ParamVector(std::vector<LayerSpec> m, std::vector<float> d);

    static ParamVector zeros(std::vector<LayerSpec> manifest);
    static ParamVector zeros_like(const ParamVector& other) { return zeros(other.manifest); }

    std::size_t size() const { return data.size(); }
    bool all_finite() const;

    // Throws StructuralError unless both manifests are identical.
    static void require_same_manifest(const ParamVector& a, const ParamVector& b,
                                      const std::string& context);
};

// Element-wise dst + coeff*src with 64-bit accumulation, rounded once to
// 32-bit. Manifests must match.
ParamVector axpy_scale(const ParamVector& dst, const ParamVector& src, double coeff);

// Checkpoint file: text manifest header followed by raw little-endian 32-bit
// reals. Round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const ParamVector& params);
ParamVector load_checkpoint(const std::filesystem::path& path);

}  // namespace fedkbp
