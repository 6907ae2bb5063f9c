#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fedkbp/dataset.hpp"
#include "fedkbp/rng.hpp"

namespace fedkbp {

namespace {

// Tunable phantom constants. Chosen so the reference model can fit the dose
// field at desk scale within the default round budgets.
constexpr Spacing3 kPhantomSpacing{3.0, 3.0, 3.0};
constexpr double kDoseFalloffMm = 9.0;
constexpr float kMaskThresholdGy = 0.5f;
constexpr double kTargetSemiAxisLoFrac = 0.10;  // of min grid dim, in voxels
constexpr double kTargetSemiAxisHiFrac = 0.18;
constexpr double kOarSemiAxisLoFrac = 0.07;
constexpr double kOarSemiAxisHiFrac = 0.14;
constexpr double kCtBaseDensity = 1.0;
constexpr double kCtNoiseAmplitude = 0.12;
constexpr double kCtMandibleBoost = 0.8;
constexpr std::uint64_t kPhantomStreamTag = 0x9A4Bu;

struct Ellipsoid {
    double cx, cy, cz;  // voxel-center coordinates
    double ax, ay, az;  // semi-axes in voxels

    // Normalized radial coordinate; <= 1 inside.
    double u(double x, double y, double z) const {
        const double dx = (x - cx) / ax;
        const double dy = (y - cy) / ay;
        const double dz = (z - cz) / az;
        return std::sqrt(dx * dx + dy * dy + dz * dz);
    }

    double mean_radius_mm(const Spacing3& sp) const {
        return (ax * sp.sx + ay * sp.sy + az * sp.sz) / 3.0;
    }
};

// Centers snap to voxel centers so every structure contains at least one voxel.
Ellipsoid sample_ellipsoid(Rng& rng, Dims3 dims, double lo_frac, double hi_frac,
                           double center_margin_frac) {
    const int min_dim = std::min({dims.nx, dims.ny, dims.nz});
    auto center_along = [&](int n) {
        const int margin = std::max(1, static_cast<int>(std::floor(n * center_margin_frac)));
        const int span = std::max(1, n - 2 * margin);
        return static_cast<double>(margin + static_cast<int>(rng.bounded(
                                                static_cast<std::uint64_t>(span)))) +
               0.5;
    };
    Ellipsoid e;
    e.cx = center_along(dims.nx);
    e.cy = center_along(dims.ny);
    e.cz = center_along(dims.nz);
    e.ax = rng.uniform(lo_frac * min_dim, hi_frac * min_dim);
    e.ay = rng.uniform(lo_frac * min_dim, hi_frac * min_dim);
    e.az = rng.uniform(lo_frac * min_dim, hi_frac * min_dim);
    return e;
}

VoxelGrid ellipsoid_mask(const Ellipsoid& e, Dims3 dims) {
    VoxelGrid mask = VoxelGrid::zeros(dims, kPhantomSpacing);
    std::size_t i = 0;
    for (int z = 0; z < dims.nz; ++z)
        for (int y = 0; y < dims.ny; ++y)
            for (int x = 0; x < dims.nx; ++x, ++i)
                if (e.u(x + 0.5, y + 0.5, z + 0.5) <= 1.0) mask.values[i] = 1.0f;
    return mask;
}

// 3-tap box filter along each axis, edge-clamped, computed in double.
void box_smooth(std::vector<double>& field, Dims3 dims) {
    std::vector<double> tmp(field.size());
    auto idx = [&](int x, int y, int z) {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims.nx) *
                   (static_cast<std::size_t>(y) +
                    static_cast<std::size_t>(dims.ny) * static_cast<std::size_t>(z));
    };
    auto pass = [&](int axis) {
        for (int z = 0; z < dims.nz; ++z)
            for (int y = 0; y < dims.ny; ++y)
                for (int x = 0; x < dims.nx; ++x) {
                    double sum = 0.0;
                    int n = 0;
                    for (int d = -1; d <= 1; ++d) {
                        int xx = x + (axis == 0 ? d : 0);
                        int yy = y + (axis == 1 ? d : 0);
                        int zz = z + (axis == 2 ? d : 0);
                        if (xx < 0 || xx >= dims.nx || yy < 0 || yy >= dims.ny || zz < 0 ||
                            zz >= dims.nz)
                            continue;
                        sum += field[idx(xx, yy, zz)];
                        ++n;
                    }
                    tmp[idx(x, y, z)] = sum / n;
                }
        field.swap(tmp);
    };
    for (int axis = 0; axis < 3; ++axis) pass(axis);
}

Case make_phantom_case(std::uint64_t seed, int index, Dims3 dims, Split split) {
    Rng rng = Rng::stream(seed, {kPhantomStreamTag, static_cast<std::uint64_t>(index)});

    Case c;
    {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "ph%04d", index);
        c.id = buf;
    }
    c.split = split;

    // Targets, one per prescription level, placed centrally.
    std::vector<Ellipsoid> targets;
    const auto& catalog = roi_catalog();
    for (int t = 0; t < kNumTargets; ++t) {
        targets.push_back(
            sample_ellipsoid(rng, dims, kTargetSemiAxisLoFrac, kTargetSemiAxisHiFrac, 0.25));
    }

    // A per-case subset of 5..7 OARs.
    const int n_oars = 5 + static_cast<int>(rng.bounded(3));
    std::vector<int> oar_indices(kNumOars);
    for (int i = 0; i < kNumOars; ++i) oar_indices[static_cast<std::size_t>(i)] = i;
    rng.shuffle(oar_indices);
    oar_indices.resize(static_cast<std::size_t>(n_oars));
    std::sort(oar_indices.begin(), oar_indices.end());

    std::vector<std::pair<std::string, Ellipsoid>> oars;
    for (int oi : oar_indices) {
        oars.emplace_back(
            catalog[static_cast<std::size_t>(oi)].name,
            sample_ellipsoid(rng, dims, kOarSemiAxisLoFrac, kOarSemiAxisHiFrac, 0.12));
    }

    // Dose: prescription inside each target, exponential falloff outside.
    const std::size_t total = dims.total();
    std::vector<float> dose(total, 0.0f);
    {
        std::size_t i = 0;
        for (int z = 0; z < dims.nz; ++z)
            for (int y = 0; y < dims.ny; ++y)
                for (int x = 0; x < dims.nx; ++x, ++i) {
                    double d = 0.0;
                    for (int t = 0; t < kNumTargets; ++t) {
                        const double prescription =
                            *catalog[static_cast<std::size_t>(kNumOars + t)].prescription_gy;
                        const double u =
                            targets[static_cast<std::size_t>(t)].u(x + 0.5, y + 0.5, z + 0.5);
                        const double outside_mm =
                            std::max(0.0, u - 1.0) *
                            targets[static_cast<std::size_t>(t)].mean_radius_mm(kPhantomSpacing);
                        d = std::max(d, prescription * std::exp(-outside_mm / kDoseFalloffMm));
                    }
                    dose[i] = static_cast<float>(std::max(0.0, d));
                }
    }
    c.dose = VoxelGrid(dims, kPhantomSpacing, std::move(dose));

    std::vector<float> pdm(total, 0.0f);
    for (std::size_t i = 0; i < total; ++i)
        if (c.dose.values[i] > kMaskThresholdGy) pdm[i] = 1.0f;
    c.possible_dose_mask = VoxelGrid(dims, kPhantomSpacing, std::move(pdm));

    for (int t = 0; t < kNumTargets; ++t) {
        c.roi_masks.emplace(catalog[static_cast<std::size_t>(kNumOars + t)].name,
                            ellipsoid_mask(targets[static_cast<std::size_t>(t)], dims));
    }
    for (const auto& [name, e] : oars) c.roi_masks.emplace(name, ellipsoid_mask(e, dims));

    // CT: smoothed density noise, denser inside the mandible when present.
    std::vector<double> ct(total);
    for (auto& v : ct)
        v = kCtBaseDensity + rng.uniform(-kCtNoiseAmplitude, kCtNoiseAmplitude);
    box_smooth(ct, dims);
    if (auto it = c.roi_masks.find("Mandible"); it != c.roi_masks.end()) {
        for (std::size_t i = 0; i < total; ++i)
            if (it->second.values[i] != 0.0f) ct[i] += kCtMandibleBoost;
    }
    std::vector<float> ct_f(total);
    for (std::size_t i = 0; i < total; ++i) ct_f[i] = static_cast<float>(ct[i]);
    c.ct = VoxelGrid(dims, kPhantomSpacing, std::move(ct_f));

    c.validate();
    return c;
}

}  // namespace

std::vector<Case> generate_phantom_set(std::uint64_t seed, int n_train, int n_val, int n_test,
                                       Dims3 dims) {
    if (dims.nx < 8 || dims.ny < 8 || dims.nz < 8)
        throw ConfigError("phantom dims must be at least 8 per axis");
    if (n_train < 0 || n_val < 0 || n_test < 0)
        throw ConfigError("phantom counts must be non-negative");

    std::vector<Case> cases;
    cases.reserve(static_cast<std::size_t>(n_train + n_val + n_test));
    int index = 0;
    for (int i = 0; i < n_train; ++i) cases.push_back(make_phantom_case(seed, index++, dims, Split::TRAIN));
    for (int i = 0; i < n_val; ++i) cases.push_back(make_phantom_case(seed, index++, dims, Split::VALIDATE));
    for (int i = 0; i < n_test; ++i) cases.push_back(make_phantom_case(seed, index++, dims, Split::TEST));
    return cases;
}

}  // namespace fedkbp
