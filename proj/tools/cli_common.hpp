// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "codeforge/corpus/corpus.hpp"
#include "codeforge/numeric/ops.hpp"

namespace codeforge::cli {

namespace fs = std::filesystem;
using numeric::TokenId;

/// Streams and timing shared by every subcommand of one invocation.
struct Session {
    std::ostream& out;
    std::ostream& err;
    std::vector<std::string> argv;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    double elapsed() const;
};

/// Everything needed to reproduce an artifact.
struct RunManifest {
    std::string subcommand;
    nlohmann::json config;
    std::uint64_t seed = 0;
    nlohmann::json inputs = nlohmann::json::object();
    nlohmann::json outputs = nlohmann::json::object();

    nlohmann::json to_json(const Session& session) const;
};

/// `<dir>/run_manifest.json`, written atomically.
void write_manifest_in(const fs::path& dir, const RunManifest& manifest, const Session& session);
/// `<file>.run.json` beside a single-file artifact.
void write_manifest_beside(const fs::path& file, const RunManifest& manifest, const Session& session);

nlohmann::json read_json_file(const fs::path& path);
/// A config file may be a bare config or a run manifest; the latter yields its "config".
nlohmann::json read_config_file(const std::optional<std::string>& path);

/// Seed precedence: flag, then config value, then CODEFORGE_SEED, then 0.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const nlohmann::json& config_value);

/// Every record of a split file, whatever its language.
std::vector<corpus::Sample> load_split(const fs::path& path);
std::optional<fs::path> optional_split(const fs::path& dir, const std::string& name);

void print_json(std::ostream& out, const nlohmann::json& j);

/// Subcommand registrars. Each adds its subcommand to `app` and arranges for
/// its handler to run from the parse callback.
void add_data_commands(CLI::App& app, Session& session);
void add_train_commands(CLI::App& app, Session& session);
void add_eval_commands(CLI::App& app, Session& session);

}  // namespace codeforge::cli
