#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "bcid/errors.hpp"
#include "bcid/federation.hpp"
#include "bcid/synth.hpp"

namespace bcid {

// Flat `key = value` files with # comments; dotted keys group related
// settings (attack.kind, pretrain.epochs).
class ConfigFile {
public:
    static ConfigFile parse(std::istream& is, const std::string& source = "<config>") {
        ConfigFile cfg;
        cfg.source_ = source;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos)
                line.erase(hash);
            if (line.find_first_not_of(" \t\r") == std::string::npos)
                continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ParseError(source, lineno, "expected key = value");
            cfg.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        }
        return cfg;
    }

    static ConfigFile load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is)
            throw Error("io_error", "cannot open " + path);
        return parse(is, path);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_f64(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end())
            return fallback;
        try {
            return std::stod(it->second);
        } catch (const std::exception&) {
            throw InvalidConfig(source_ + ": key '" + key + "' is not a number: " + it->second);
        }
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end())
            return fallback;
        try {
            return std::stoull(it->second);
        } catch (const std::exception&) {
            throw InvalidConfig(source_ + ": key '" + key + "' is not an integer: " + it->second);
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end())
            return fallback;
        if (it->second == "true" || it->second == "1")
            return true;
        if (it->second == "false" || it->second == "0")
            return false;
        throw InvalidConfig(source_ + ": key '" + key + "' is not a bool: " + it->second);
    }

    const std::map<std::string, std::string>& values() const { return values_; }

    // Canonical text used for manifest hashing: sorted keys, one per line.
    std::string canonical() const {
        std::string out;
        for (const auto& [k, v] : values_) {
            out += k;
            out += '=';
            out += v;
            out += '\n';
        }
        return out;
    }

private:
    static std::string trim(std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    }

    std::string source_ = "<config>";
    std::map<std::string, std::string> values_;
};

inline ScenarioConfig scenario_from_config(const ConfigFile& cfg,
                                           std::optional<std::uint64_t> seed_override = {}) {
    ScenarioConfig sc;
    sc.seed = seed_override.value_or(cfg.get_u64("seed", sc.seed));
    sc.duration = cfg.get_f64("duration", sc.duration);
    sc.node_count = static_cast<std::uint8_t>(cfg.get_u64("node_count", sc.node_count));
    sc.benign_tx_rate = cfg.get_f64("benign_tx_rate", sc.benign_tx_rate);
    const std::string kind = cfg.get_str("attack.kind", "none");
    if (kind != "none") {
        AttackConfig a;
        if (kind == "bp")
            a.kind = ClassId::Bp;
        else if (kind == "dos")
            a.kind = ClassId::Dos;
        else if (kind == "fot")
            a.kind = ClassId::Fot;
        else
            throw InvalidConfig("attack.kind must be none, bp, dos or fot; got '" + kind + "'");
        a.start = cfg.get_f64("attack.start", a.start);
        a.intensity = cfg.get_f64("attack.intensity", a.intensity);
        a.attacker_ip = cfg.get_str("attack.attacker_ip", a.attacker_ip);
        sc.attack = a;
    }
    sc.validate();
    return sc;
}

inline std::vector<std::size_t> parse_size_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        out.push_back(std::stoull(tok));
    return out;
}

inline TrainConfig train_config_from_config(const ConfigFile& cfg,
                                            std::optional<std::uint64_t> seed_override = {}) {
    TrainConfig tc;
    tc.seed = seed_override.value_or(cfg.get_u64("seed", tc.seed));
    tc.mu = cfg.get_f64("mu", tc.mu);
    tc.max_rounds = cfg.get_u64("max_rounds", tc.max_rounds);
    tc.convergence_epsilon = cfg.get_f64("convergence_epsilon", tc.convergence_epsilon);
    tc.local_batch = cfg.get_u64("local_batch", tc.local_batch);
    tc.node_count = cfg.get_u64("node_count", tc.node_count);
    tc.include_generative_term =
        cfg.get_bool("include_generative_term", tc.include_generative_term);
    tc.generative_cd_k = static_cast<unsigned>(cfg.get_u64("generative_cd_k", tc.generative_cd_k));
    tc.pretrain.epochs = cfg.get_u64("pretrain.epochs", tc.pretrain.epochs);
    tc.pretrain.learning_rate = cfg.get_f64("pretrain.learning_rate", tc.pretrain.learning_rate);
    tc.pretrain.batch_size = cfg.get_u64("pretrain.batch_size", tc.pretrain.batch_size);
    tc.pretrain.cd_k = static_cast<unsigned>(cfg.get_u64("pretrain.cd_k", tc.pretrain.cd_k));
    if (cfg.has("hidden_sizes"))
        tc.hidden_sizes = parse_size_list(cfg.get_str("hidden_sizes", ""));
    tc.message_timeout_s = cfg.get_f64("message_timeout_s", tc.message_timeout_s);
    tc.validate();
    return tc;
}

} // namespace bcid
