#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedkbp/case.hpp"

namespace fedkbp {

inline constexpr int kNumSites = 8;

enum class Distribution { IID, NONIID };

std::string distribution_name(Distribution d);
Distribution distribution_from_name(const std::string& name);

// Per-site training/validating case counts. The two canonical schedules carry
// the full-scale study counts; the desk-scale variants are scaled analogues
// used by the synthetic default run.
struct PartitionSchedule {
    Distribution kind = Distribution::IID;
    std::array<int, kNumSites> train_counts{};
    std::array<int, kNumSites> val_counts{};

    int train_total() const;
    int val_total() const;

    // Full-scale schedules: IID 25/5 per site; non-IID train
    // [40,35,30,25,25,20,15,10] and val [8,7,6,5,5,4,3,2].
    static PartitionSchedule table_iid();
    static PartitionSchedule table_noniid();

    // Desk-scale analogues over 40 train / 8 val cases: IID 5/1 per site;
    // non-IID train [8,7,6,5,5,4,3,2] with one validating case per site.
    static PartitionSchedule desk_iid();
    static PartitionSchedule desk_noniid();

    // Picks the schedule matching the given pool sizes (full table scale or
    // desk scale); throws ConfigError for unsupported sizes.
    static PartitionSchedule for_pools(Distribution kind, int n_train, int n_val);
};

struct SitePartition {
    int site_id = 0;
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
};

// Shuffles each pool with a deterministic PRNG seeded by `seed`, then assigns
// contiguous blocks per site in site-index order. Assignments are disjoint
// and jointly cover the pools.
std::vector<SitePartition> partition(const std::vector<std::string>& train_pool,
                                     const std::vector<std::string>& val_pool,
                                     const PartitionSchedule& schedule, std::uint64_t seed);

// Native case format: one subdirectory per case holding manifest.json plus
// one raw little-endian float32 grid file per channel (x-fastest order).
std::vector<Case> ingest_native(const std::filesystem::path& dir);
void export_native(const Case& c, const std::filesystem::path& case_dir);
void export_native_set(const std::vector<Case>& cases, const std::filesystem::path& dir);

// Best-effort loader for the OpenKBP challenge CSV layout: per-case folders
// of CSVs listing flattened voxel indices (masks) or index,value pairs
// (ct, dose) on a fixed grid.
struct OpenKbpLoaderConfig {
    // Challenge release grid; spacing is overridden per case when a
    // voxel_dimensions.csv file is present.
    Dims3 dims{128, 128, 128};
    Spacing3 spacing_mm{3.906, 3.906, 2.5};
};

std::vector<Case> ingest_openkbp(const std::filesystem::path& dir,
                                 const OpenKbpLoaderConfig& config = {});

// Synthetic phantom cases: ellipsoidal 70/63/56 Gy targets with exponential
// dose falloff, ellipsoidal OARs, and a smoothed tissue-density CT channel.
// Deterministic per (seed, counts, dims).
std::vector<Case> generate_phantom_set(std::uint64_t seed, int n_train, int n_val, int n_test,
                                       Dims3 dims);

}  // namespace fedkbp
