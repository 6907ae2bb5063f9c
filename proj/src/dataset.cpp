#include "fedkbp/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "fedkbp/detail/little_endian.hpp"
#include "fedkbp/rng.hpp"

namespace fedkbp {

namespace fs = std::filesystem;
using nlohmann::json;

std::string distribution_name(Distribution d) {
    return d == Distribution::IID ? "iid" : "noniid";
}

Distribution distribution_from_name(const std::string& name) {
    if (name == "iid") return Distribution::IID;
    if (name == "noniid" || name == "non-iid") return Distribution::NONIID;
    throw ConfigError("unknown distribution: " + name);
}

int PartitionSchedule::train_total() const {
    return std::accumulate(train_counts.begin(), train_counts.end(), 0);
}

int PartitionSchedule::val_total() const {
    return std::accumulate(val_counts.begin(), val_counts.end(), 0);
}

PartitionSchedule PartitionSchedule::table_iid() {
    PartitionSchedule s;
    s.kind = Distribution::IID;
    s.train_counts = {25, 25, 25, 25, 25, 25, 25, 25};
    s.val_counts = {5, 5, 5, 5, 5, 5, 5, 5};
    return s;
}

PartitionSchedule PartitionSchedule::table_noniid() {
    PartitionSchedule s;
    s.kind = Distribution::NONIID;
    s.train_counts = {40, 35, 30, 25, 25, 20, 15, 10};
    s.val_counts = {8, 7, 6, 5, 5, 4, 3, 2};
    return s;
}

PartitionSchedule PartitionSchedule::desk_iid() {
    PartitionSchedule s;
    s.kind = Distribution::IID;
    s.train_counts = {5, 5, 5, 5, 5, 5, 5, 5};
    s.val_counts = {1, 1, 1, 1, 1, 1, 1, 1};
    return s;
}

PartitionSchedule PartitionSchedule::desk_noniid() {
    PartitionSchedule s;
    s.kind = Distribution::NONIID;
    s.train_counts = {8, 7, 6, 5, 5, 4, 3, 2};
    // The 8 validating cases cannot be skewed across 8 sites while keeping
    // every site evaluable, so each site keeps one.
    s.val_counts = {1, 1, 1, 1, 1, 1, 1, 1};
    return s;
}

PartitionSchedule PartitionSchedule::for_pools(Distribution kind, int n_train, int n_val) {
    const PartitionSchedule table =
        kind == Distribution::IID ? table_iid() : table_noniid();
    if (table.train_total() == n_train && table.val_total() == n_val) return table;
    const PartitionSchedule desk = kind == Distribution::IID ? desk_iid() : desk_noniid();
    if (desk.train_total() == n_train && desk.val_total() == n_val) return desk;
    throw ConfigError("no partition schedule for pool sizes " + std::to_string(n_train) +
                      " train / " + std::to_string(n_val) +
                      " val (supported: 200/40 full scale, 40/8 desk scale)");
}

std::vector<SitePartition> partition(const std::vector<std::string>& train_pool,
                                     const std::vector<std::string>& val_pool,
                                     const PartitionSchedule& schedule, std::uint64_t seed) {
    if (static_cast<int>(train_pool.size()) != schedule.train_total())
        throw ConfigError("train pool size " + std::to_string(train_pool.size()) +
                          " does not match schedule total " +
                          std::to_string(schedule.train_total()));
    if (static_cast<int>(val_pool.size()) != schedule.val_total())
        throw ConfigError("val pool size " + std::to_string(val_pool.size()) +
                          " does not match schedule total " + std::to_string(schedule.val_total()));

    auto check_unique = [](const std::vector<std::string>& pool, const char* what) {
        std::set<std::string> seen;
        for (const auto& id : pool)
            if (!seen.insert(id).second)
                throw DataError(std::string("duplicate id in ") + what + " pool: " + id);
    };
    check_unique(train_pool, "train");
    check_unique(val_pool, "val");

    std::vector<std::string> train = train_pool;
    std::vector<std::string> val = val_pool;
    Rng rng = Rng::seeded(seed);
    rng.shuffle(train);
    rng.shuffle(val);

    std::vector<SitePartition> sites(kNumSites);
    std::size_t t = 0, v = 0;
    for (int k = 0; k < kNumSites; ++k) {
        sites[static_cast<std::size_t>(k)].site_id = k;
        for (int i = 0; i < schedule.train_counts[static_cast<std::size_t>(k)]; ++i)
            sites[static_cast<std::size_t>(k)].train_ids.push_back(train[t++]);
        for (int i = 0; i < schedule.val_counts[static_cast<std::size_t>(k)]; ++i)
            sites[static_cast<std::size_t>(k)].val_ids.push_back(val[v++]);
    }
    return sites;
}

// ---------------------------------------------------------------------------
// Native format

namespace {

std::vector<float> read_raw_grid(const fs::path& file, const std::string& case_id,
                                 std::size_t expected) {
    std::ifstream in(file, std::ios::binary);
    if (!in)
        throw DataError("case " + case_id + ": missing grid file " + file.string());
    std::vector<std::uint8_t> bytes(expected * 4);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()) || in.peek() != EOF)
        throw DataError("case " + case_id + ": grid file " + file.string() +
                        " size does not match manifest dims");
    detail::ByteReader reader{bytes.data(), bytes.size(), 0};
    std::vector<float> values(expected);
    for (auto& v : values) v = reader.get_f32("grid value");
    return values;
}

void write_raw_grid(const fs::path& file, const VoxelGrid& grid) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw DataError("cannot open grid file for writing: " + file.string());
    std::vector<std::uint8_t> bytes;
    bytes.reserve(grid.values.size() * 4);
    for (float v : grid.values) detail::put_f32(bytes, v);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing grid file: " + file.string());
}

Case ingest_native_case(const fs::path& case_dir) {
    const std::string case_id = case_dir.filename().string();
    const fs::path manifest_path = case_dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw DataError("case " + case_id + ": missing manifest.json");
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw DataError("case " + case_id + ": malformed manifest.json: " + e.what());
    }

    try {
        const auto jd = manifest.at("dims");
        const Dims3 dims{jd.at(0).get<int>(), jd.at(1).get<int>(), jd.at(2).get<int>()};
        const auto js = manifest.at("spacing_mm");
        const Spacing3 spacing{js.at(0).get<double>(), js.at(1).get<double>(),
                               js.at(2).get<double>()};
        if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0)
            throw DataError("case " + case_id + ": non-positive dims in manifest");

        auto load = [&](const std::string& file) {
            return VoxelGrid(dims, spacing, read_raw_grid(case_dir / file, case_id, dims.total()));
        };

        Case c;
        c.id = case_id;
        c.split = split_from_name(manifest.at("split").get<std::string>());
        const auto channels = manifest.at("channels");
        c.ct = load(channels.at("ct").get<std::string>());
        c.dose = load(channels.at("dose").get<std::string>());
        c.possible_dose_mask = load(channels.at("possible_dose_mask").get<std::string>());
        for (const auto& roi : manifest.at("rois")) {
            const auto name = roi.at("name").get<std::string>();
            if (!is_known_roi(name))
                throw DataError("case " + case_id + ": unknown ROI " + name + " in manifest");
            VoxelGrid mask = load(roi.at("file").get<std::string>());
            if (!mask.is_binary())
                throw DataError("case " + case_id + ": non-binary mask in file " +
                                roi.at("file").get<std::string>());
            c.roi_masks.emplace(name, std::move(mask));
        }
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw DataError("case " + case_id + ": manifest.json field error: " + e.what());
    }
}

}  // namespace

std::vector<Case> ingest_native(const fs::path& dir) {
    if (!fs::exists(dir)) throw DataError("native data directory does not exist: " + dir.string());
    std::vector<fs::path> case_dirs;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_directory()) case_dirs.push_back(entry.path());
    std::sort(case_dirs.begin(), case_dirs.end());

    std::vector<Case> cases;
    cases.reserve(case_dirs.size());
    for (const auto& cd : case_dirs) cases.push_back(ingest_native_case(cd));
    return cases;
}

void export_native(const Case& c, const fs::path& case_dir) {
    fs::create_directories(case_dir);
    json manifest;
    manifest["id"] = c.id;
    manifest["dims"] = {c.ct.dims.nx, c.ct.dims.ny, c.ct.dims.nz};
    manifest["spacing_mm"] = {c.ct.spacing_mm.sx, c.ct.spacing_mm.sy, c.ct.spacing_mm.sz};
    manifest["split"] = split_name(c.split);
    manifest["channels"] = {{"ct", "ct.raw"},
                            {"dose", "dose.raw"},
                            {"possible_dose_mask", "possible_dose_mask.raw"}};
    json rois = json::array();
    for (const auto& [name, mask] : c.roi_masks) {
        const RoiLabel& label = roi_by_name(name);
        json r;
        r["name"] = name;
        r["kind"] = label.kind == RoiKind::OAR ? "oar" : "target";
        if (label.prescription_gy) r["prescription_gy"] = *label.prescription_gy;
        r["file"] = "roi_" + name + ".raw";
        rois.push_back(r);
        write_raw_grid(case_dir / ("roi_" + name + ".raw"), mask);
    }
    manifest["rois"] = rois;

    std::ofstream out(case_dir / "manifest.json");
    if (!out) throw DataError("cannot write manifest for case " + c.id);
    out << manifest.dump(2) << "\n";
    write_raw_grid(case_dir / "ct.raw", c.ct);
    write_raw_grid(case_dir / "dose.raw", c.dose);
    write_raw_grid(case_dir / "possible_dose_mask.raw", c.possible_dose_mask);
}

void export_native_set(const std::vector<Case>& cases, const fs::path& dir) {
    fs::create_directories(dir);
    for (const auto& c : cases) export_native(c, dir / c.id);
}

// ---------------------------------------------------------------------------
// OpenKBP CSV format

namespace {

struct CsvRow {
    std::size_t index = 0;
    double value = 0.0;
    bool has_value = false;
};

// Accepts "index" and "index,value" rows; a leading non-numeric header line
// (as shipped in the challenge CSVs) is skipped.
std::vector<CsvRow> read_openkbp_csv(const fs::path& file, std::size_t grid_total) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open CSV file: " + file.string());
    std::vector<CsvRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line_no == 1 && (line[0] < '0' || line[0] > '9')) continue;  // header

        const auto comma = line.find(',');
        const std::string idx_text = comma == std::string::npos ? line : line.substr(0, comma);
        const std::string val_text = comma == std::string::npos ? "" : line.substr(comma + 1);
        CsvRow row;
        try {
            std::size_t consumed = 0;
            row.index = std::stoull(idx_text, &consumed);
            if (consumed != idx_text.size()) throw std::invalid_argument("trailing junk");
            if (!val_text.empty()) {
                row.value = std::stod(val_text, &consumed);
                if (consumed != val_text.size()) throw std::invalid_argument("trailing junk");
                row.has_value = true;
            }
        } catch (const std::exception&) {
            throw DataError("malformed CSV row at " + file.string() + ":" +
                            std::to_string(line_no) + ": '" + line + "'");
        }
        if (row.index >= grid_total)
            throw DataError("voxel index " + std::to_string(row.index) +
                            " out of grid bounds at " + file.string() + ":" +
                            std::to_string(line_no));
        rows.push_back(row);
    }
    return rows;
}

VoxelGrid csv_to_mask(const fs::path& file, Dims3 dims, Spacing3 spacing) {
    VoxelGrid g = VoxelGrid::zeros(dims, spacing);
    for (const auto& row : read_openkbp_csv(file, dims.total())) g.values[row.index] = 1.0f;
    return g;
}

VoxelGrid csv_to_field(const fs::path& file, Dims3 dims, Spacing3 spacing) {
    VoxelGrid g = VoxelGrid::zeros(dims, spacing);
    for (const auto& row : read_openkbp_csv(file, dims.total())) {
        if (!row.has_value)
            throw DataError("expected index,value rows in " + file.string());
        g.values[row.index] = static_cast<float>(row.value);
    }
    return g;
}

Split split_for_openkbp_dir(const fs::path& case_dir) {
    // The challenge release groups cases under train-pats / validation-pats /
    // test-pats; fall back to TRAIN when the layout is flat.
    const std::string parent = case_dir.parent_path().filename().string();
    if (parent.find("train") != std::string::npos) return Split::TRAIN;
    if (parent.find("valid") != std::string::npos) return Split::VALIDATE;
    if (parent.find("test") != std::string::npos) return Split::TEST;
    return Split::TRAIN;
}

Case ingest_openkbp_case(const fs::path& case_dir, const OpenKbpLoaderConfig& config) {
    const std::string case_id = case_dir.filename().string();
    const Dims3 dims = config.dims;

    Spacing3 spacing = config.spacing_mm;
    const fs::path vox_file = case_dir / "voxel_dimensions.csv";
    if (fs::exists(vox_file)) {
        std::ifstream in(vox_file);
        double s[3];
        for (int i = 0; i < 3; ++i) {
            std::string line;
            if (!std::getline(in, line))
                throw DataError("case " + case_id + ": voxel_dimensions.csv needs 3 rows");
            try {
                s[i] = std::stod(line);
            } catch (const std::exception&) {
                throw DataError("case " + case_id + ": malformed voxel_dimensions.csv row: " + line);
            }
        }
        spacing = Spacing3{s[0], s[1], s[2]};
    }

    Case c;
    c.id = case_id;
    c.split = split_for_openkbp_dir(case_dir);

    const fs::path ct_file = case_dir / "ct.csv";
    const fs::path dose_file = case_dir / "dose.csv";
    const fs::path pdm_file = case_dir / "possible_dose_mask.csv";
    if (!fs::exists(ct_file))
        throw DataError("case " + case_id + ": missing ct.csv");
    if (!fs::exists(dose_file))
        throw DataError("case " + case_id + ": missing dose.csv");
    if (!fs::exists(pdm_file))
        throw DataError("case " + case_id + ": missing possible_dose_mask.csv");
    c.ct = csv_to_field(ct_file, dims, spacing);
    c.dose = csv_to_field(dose_file, dims, spacing);
    c.possible_dose_mask = csv_to_mask(pdm_file, dims, spacing);

    for (const auto& label : roi_catalog()) {
        const fs::path roi_file = case_dir / (label.name + ".csv");
        if (fs::exists(roi_file))
            c.roi_masks.emplace(label.name, csv_to_mask(roi_file, dims, spacing));
    }
    c.validate();
    return c;
}

}  // namespace

std::vector<Case> ingest_openkbp(const fs::path& dir, const OpenKbpLoaderConfig& config) {
    if (!fs::exists(dir)) throw DataError("OpenKBP directory does not exist: " + dir.string());

    // A case folder is any directory containing ct.csv; the release nests
    // them one level under the split directories.
    std::vector<fs::path> case_dirs;
    auto consider = [&](const fs::path& p) {
        if (fs::is_directory(p) && fs::exists(p / "ct.csv")) case_dirs.push_back(p);
    };
    consider(dir);
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_directory()) consider(entry.path());

    std::sort(case_dirs.begin(), case_dirs.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
    std::vector<Case> cases;
    cases.reserve(case_dirs.size());
    for (const auto& cd : case_dirs) cases.push_back(ingest_openkbp_case(cd, config));
    return cases;
}

}  // namespace fedkbp
