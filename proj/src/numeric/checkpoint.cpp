// SPDX-License-Identifier: Apache-2.0

#include "codeforge/numeric/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "codeforge/util/atomic_write.hpp"

namespace codeforge::numeric {

namespace {

static_assert(std::numeric_limits<float>::is_iec559, "checkpoint format requires IEEE-754 float32");

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

void put_f32(std::string& out, float f) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

float get_f32(const unsigned char* p) {
    std::uint32_t bits = 0;
    for (int i = 3; i >= 0; --i) bits = (bits << 8) | p[i];
    return std::bit_cast<float>(bits);
}

}  // namespace

const NamedArray& CheckpointData::array(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return a;
    throw CheckpointError("checkpoint has no array named " + name);
}

nlohmann::json parameter_table(std::span<const Parameter> params) {
    auto table = nlohmann::json::array();
    for (const auto& p : params) table.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
    return table;
}

NamedArray to_named_array(const std::string& name, const Tensor& tensor) {
    NamedArray a{name, tensor.shape(), {}};
    a.values.reserve(tensor.numel());
    for (real v : tensor.data()) a.values.push_back(static_cast<float>(v));
    return a;
}

void save_checkpoint(const std::filesystem::path& path, nlohmann::json manifest, std::span<const NamedArray> arrays) {
    auto table = nlohmann::json::array();
    for (const auto& a : arrays) {
        if (a.values.size() != shape_numel(a.shape))
            throw CheckpointError("array " + a.name + " has " + std::to_string(a.values.size()) +
                                  " values for shape " + shape_str(a.shape));
        table.push_back({{"name", a.name}, {"shape", a.shape}});
    }
    manifest["parameters"] = std::move(table);
    const std::string text = manifest.dump();

    std::string blob(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_u64(blob, text.size());
    blob += text;
    for (const auto& a : arrays)
        for (float v : a.values) put_f32(blob, v);
    util::write_file_atomic(path, blob);
}

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& architecture, const nlohmann::json& codec,
                     std::span<const Parameter> params, const nlohmann::json& extra) {
    nlohmann::json manifest = {{"architecture", architecture}, {"codec", codec}};
    if (!extra.is_null()) manifest["extra"] = extra;
    std::vector<NamedArray> arrays;
    arrays.reserve(params.size());
    for (const auto& p : params) arrays.push_back(to_named_array(p.name, p.tensor));
    save_checkpoint(path, std::move(manifest), arrays);
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    if (blob.size() < 16 || std::memcmp(blob.data(), kCheckpointMagic, 8) != 0)
        throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
    const std::uint64_t len = get_u64(bytes + 8);
    if (len > blob.size() - 16) throw CheckpointError(path.string() + ": truncated manifest");

    CheckpointData data;
    try {
        data.manifest = nlohmann::json::parse(blob.substr(16, len));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path.string() + ": manifest is not valid JSON: " + e.what());
    }
    std::size_t offset = 16 + len;
    for (const auto& entry : data.manifest.at("parameters")) {
        NamedArray a;
        a.name = entry.at("name").get<std::string>();
        a.shape = entry.at("shape").get<Shape>();
        const std::size_t n = shape_numel(a.shape);
        if (offset + 4 * n > blob.size()) throw CheckpointError(path.string() + ": truncated data for " + a.name);
        a.values.resize(n);
        for (std::size_t i = 0; i < n; ++i) a.values[i] = get_f32(bytes + offset + 4 * i);
        offset += 4 * n;
        data.arrays.push_back(std::move(a));
    }
    if (offset != blob.size()) throw CheckpointError(path.string() + ": trailing bytes after parameter data");
    return data;
}

void restore_parameters(const CheckpointData& data, ParameterSet& params) {
    for (auto& p : params.items()) {
        const NamedArray& a = data.array(p.name);
        if (a.shape != p.tensor.shape())
            throw CheckpointError("parameter " + p.name + " has shape " + shape_str(p.tensor.shape()) +
                                  " but checkpoint stores " + shape_str(a.shape));
        auto dst = p.tensor.data();
        std::transform(a.values.begin(), a.values.end(), dst.begin(), [](float v) { return static_cast<real>(v); });
    }
}

}  // namespace codeforge::numeric
