#include "parcellate/manifest.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>

#include "parcellate/errors.hpp"

namespace ppa {

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open '" + path.string() + "' for digesting");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buffer[1 << 14];
    while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buffer[i]);
            h *= 0x100000001b3ULL;
        }
        if (got < static_cast<std::streamsize>(sizeof(buffer))) break;
    }
    return h;
}

std::string timestamp_utc() {
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["tool_version"] = kToolVersion;
    j["subcommand"] = manifest.subcommand;
    j["parameters"] = manifest.parameters;
    j["input_digests"] = manifest.input_digests;
    j["seed"] = manifest.seed;
    j["started_at"] = manifest.started_at;
    j["finished_at"] = manifest.finished_at;

    const auto path = dir / "manifest.json";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoFailure("write failed on '" + path.string() + "'");
}

}  // namespace ppa
