// SPDX-License-Identifier: Apache-2.0

#include "cli_common.hpp"

#include <cstdlib>
#include <ostream>
#include <stdexcept>

#include "codeforge/util/atomic_write.hpp"

namespace codeforge::cli {

double Session::elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

nlohmann::json RunManifest::to_json(const Session& session) const {
    return {{"subcommand", subcommand}, {"config", config},         {"seed", seed},
            {"inputs", inputs},         {"outputs", outputs},       {"version", CODEFORGE_VERSION},
            {"argv", session.argv},     {"wall_seconds", session.elapsed()}};
}

void write_manifest_in(const fs::path& dir, const RunManifest& manifest, const Session& session) {
    util::write_file_atomic(dir / "run_manifest.json", manifest.to_json(session).dump(2) + "\n");
}

void write_manifest_beside(const fs::path& file, const RunManifest& manifest, const Session& session) {
    auto path = file;
    path += ".run.json";
    util::write_file_atomic(path, manifest.to_json(session).dump(2) + "\n");
}

nlohmann::json read_json_file(const fs::path& path) {
    const std::string text = util::read_file(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

nlohmann::json read_config_file(const std::optional<std::string>& path) {
    if (!path) return nlohmann::json::object();
    auto j = read_json_file(*path);
    if (!j.is_object()) throw std::invalid_argument(*path + ": config must be a JSON object");
    if (j.contains("subcommand") && j.contains("config")) return j.at("config");
    return j;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const nlohmann::json& config_value) {
    if (flag) return *flag;
    if (!config_value.is_null()) return config_value.get<std::uint64_t>();
    if (const char* env = std::getenv("CODEFORGE_SEED"); env && *env) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(env, &used);
            if (used == std::string(env).size()) return v;
        } catch (const std::exception&) {
        }
        throw std::invalid_argument(std::string("CODEFORGE_SEED is not an unsigned integer: ") + env);
    }
    return 0;
}

std::vector<corpus::Sample> load_split(const fs::path& path) { return corpus::load_jsonl(path, "").samples; }

std::optional<fs::path> optional_split(const fs::path& dir, const std::string& name) {
    const auto p = dir / (name + ".jsonl");
    if (fs::exists(p)) return p;
    return std::nullopt;
}

void print_json(std::ostream& out, const nlohmann::json& j) { out << j.dump(2) << '\n'; }

}  // namespace codeforge::cli
