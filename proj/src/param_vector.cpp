#include "fedkbp/param_vector.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fedkbp/detail/little_endian.hpp"

namespace fedkbp {

namespace {

std::int64_t manifest_count(const std::vector<LayerSpec>& manifest) {
    std::int64_t total = 0;
    for (const auto& layer : manifest) {
        if (layer.name.empty())
            throw StructuralError("manifest layer with empty name");
        if (layer.name.find_first_of(" \t\r\n") != std::string::npos)
            throw StructuralError("manifest layer name contains whitespace: " + layer.name);
        if (layer.shape.empty())
            throw StructuralError("manifest layer " + layer.name + " has empty shape");
        for (auto d : layer.shape)
            if (d <= 0)
                throw StructuralError("manifest layer " + layer.name + " has non-positive dim");
        total += layer.count();
    }
    return total;
}

}  // namespace

ParamVector::ParamVector(std::vector<LayerSpec> m, std::vector<float> d)
    : manifest(std::move(m)), data(std::move(d)) {
    const std::int64_t expected = manifest_count(manifest);
    if (expected != static_cast<std::int64_t>(data.size())) {
        throw StructuralError("manifest element count " + std::to_string(expected) +
                              " does not match data length " + std::to_string(data.size()));
    }
}

ParamVector ParamVector::zeros(std::vector<LayerSpec> manifest) {
    const std::int64_t n = manifest_count(manifest);
    return ParamVector(std::move(manifest), std::vector<float>(static_cast<std::size_t>(n), 0.0f));
}

bool ParamVector::all_finite() const {
    for (float v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

void ParamVector::require_same_manifest(const ParamVector& a, const ParamVector& b,
                                        const std::string& context) {
    if (a.manifest != b.manifest) {
        throw StructuralError("manifest mismatch in " + context);
    }
}

ParamVector axpy_scale(const ParamVector& dst, const ParamVector& src, double coeff) {
    ParamVector::require_same_manifest(dst, src, "axpy_scale");
    std::vector<float> out(dst.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(static_cast<double>(dst.data[i]) +
                                    coeff * static_cast<double>(src.data[i]));
    }
    return ParamVector(dst.manifest, std::move(out));
}

void save_checkpoint(const std::filesystem::path& path, const ParamVector& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open checkpoint file for writing: " + path.string());
    out << "FKBP-CKPT v1\n";
    out << "layers " << params.manifest.size() << "\n";
    for (const auto& layer : params.manifest) {
        out << layer.name;
        for (auto d : layer.shape) out << " " << d;
        out << "\n";
    }
    out << "end\n";
    std::vector<std::uint8_t> bytes;
    bytes.reserve(params.data.size() * 4);
    for (float v : params.data) detail::put_f32(bytes, v);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing checkpoint file: " + path.string());
}

ParamVector load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint file: " + path.string());

    std::string line;
    if (!std::getline(in, line) || line != "FKBP-CKPT v1")
        throw DataError("bad checkpoint header in " + path.string());
    if (!std::getline(in, line) || line.rfind("layers ", 0) != 0)
        throw DataError("missing layer count in " + path.string());
    const std::size_t n_layers = std::stoul(line.substr(7));

    std::vector<LayerSpec> manifest;
    manifest.reserve(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) {
        if (!std::getline(in, line))
            throw DataError("truncated manifest in " + path.string());
        std::istringstream row(line);
        LayerSpec layer;
        row >> layer.name;
        std::int64_t d = 0;
        while (row >> d) layer.shape.push_back(d);
        if (layer.name.empty() || layer.shape.empty())
            throw DataError("malformed manifest line in " + path.string() + ": " + line);
        manifest.push_back(std::move(layer));
    }
    if (!std::getline(in, line) || line != "end")
        throw DataError("missing manifest terminator in " + path.string());

    std::int64_t count = 0;
    for (const auto& layer : manifest) count += layer.count();
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(count) * 4);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw DataError("checkpoint value block truncated in " + path.string());

    detail::ByteReader reader{bytes.data(), bytes.size(), 0};
    std::vector<float> values(static_cast<std::size_t>(count));
    for (auto& v : values) v = reader.get_f32("checkpoint value");
    ParamVector params(std::move(manifest), std::move(values));
    if (!params.all_finite())
        throw DataError("checkpoint contains non-finite values: " + path.string());
    return params;
}

}  // namespace fedkbp
