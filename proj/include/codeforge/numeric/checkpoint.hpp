// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "codeforge/numeric/parameter.hpp"

namespace codeforge::numeric {

// Checkpoint file layout:
//   8 bytes   magic "CFCKPT01"
//   8 bytes   manifest length N, little-endian uint64
//   N bytes   UTF-8 JSON manifest
//   ...       each parameter as little-endian float32, concatenated in
//             manifest order
//
// Manifest keys: "architecture" (model config), "codec" (codec manifest or
// null), "parameters" (array of {"name", "shape"}), plus optional "extra".

inline constexpr char kCheckpointMagic[8] = {'C', 'F', 'C', 'K', 'P', 'T', '0', '1'};

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

struct CheckpointData {
    nlohmann::json manifest;
    std::vector<NamedArray> arrays;

    const NamedArray& array(const std::string& name) const;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

nlohmann::json parameter_table(std::span<const Parameter> params);

/// Writes atomically (temporary file, then rename).
void save_checkpoint(const std::filesystem::path& path, nlohmann::json manifest, std::span<const NamedArray> arrays);
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& architecture, const nlohmann::json& codec,
                     std::span<const Parameter> params, const nlohmann::json& extra = nullptr);

CheckpointData load_checkpoint(const std::filesystem::path& path);

/// Copies stored values into same-named parameters; every parameter must be present
/// with a matching shape.
void restore_parameters(const CheckpointData& data, ParameterSet& params);

NamedArray to_named_array(const std::string& name, const Tensor& tensor);

}  // namespace codeforge::numeric
