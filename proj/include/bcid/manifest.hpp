#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bcid/errors.hpp"
#include "bcid/rng.hpp"
#include "bcid/version.hpp"

namespace bcid {

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Provenance record written next to every command's outputs. The timestamp
// makes the manifest itself non-reproducible by design; the data artifacts
// it lists reference it through the deterministic (config_hash, seed) pair.
struct RunManifest {
    std::string command;
    std::uint64_t seed = 0;
    std::string config_hash; // fnv-1a of the canonicalized config text
    std::string tool_version = kVersion;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string created_utc;

    static std::string now_utc() {
        const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&t, &tm);
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }

    static RunManifest make(std::string command, std::uint64_t seed,
                            const std::string& canonical_config) {
        RunManifest m;
        m.command = std::move(command);
        m.seed = seed;
        m.config_hash = hex64(fnv1a(canonical_config));
        m.created_utc = now_utc();
        return m;
    }

    // The deterministic reference embedded in JSON artifacts.
    nlohmann::json ref() const {
        nlohmann::json j;
        j["config_hash"] = config_hash;
        j["seed"] = seed;
        return j;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["command"] = command;
        j["seed"] = seed;
        j["config_hash"] = config_hash;
        j["tool_version"] = tool_version;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        j["created_utc"] = created_utc;
        return j;
    }

    void write(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os)
            throw Error("io_error", "cannot open " + path + " for writing");
        os << to_json().dump(2) << "\n";
    }
};

} // namespace bcid
