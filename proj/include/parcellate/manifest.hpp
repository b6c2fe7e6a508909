#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

namespace ppa {

inline constexpr const char* kToolVersion = "0.1.0";

// Reproducibility record written next to every subcommand's outputs. The
// parameters object holds every resolved flag, so feeding the manifest back
// through --config replays the run.
struct RunManifest {
    std::string subcommand;
    nlohmann::json parameters;     // flag name -> resolved value
    nlohmann::json input_digests;  // path -> fnv1a-64 hex
    std::uint64_t seed = 0;
    std::string started_at;
    std::string finished_at;
};

std::uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string timestamp_utc();

// Writes <dir>/manifest.json, replacing any previous manifest.
void write_manifest(const RunManifest& manifest, const std::filesystem::path& dir);

}  // namespace ppa
