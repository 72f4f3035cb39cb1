#pragma once

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bcid/errors.hpp"
#include "bcid/features.hpp"
#include "bcid/traffic.hpp"

namespace bcid {

// Shortest-round-trip would also work, but %.17g is trivially stable across
// parse/print cycles, which the byte-determinism contract leans on.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// --- packet traces: JSONL, one record per line -----------------------------

inline nlohmann::ordered_json packet_to_json(const PacketRecord& p) {
    nlohmann::ordered_json j;
    j["timestamp"] = p.timestamp;
    j["src_ip"] = p.src_ip;
    j["dst_ip"] = p.dst_ip;
    j["src_port"] = p.src_port;
    j["dst_port"] = p.dst_port;
    j["protocol"] = to_name(p.protocol);
    j["length_bytes"] = p.length_bytes;
    j["tcp_flags"] = p.tcp_flags.str();
    return j;
}

inline void write_trace_jsonl(std::ostream& os, std::span<const PacketRecord> packets) {
    for (const auto& p : packets)
        os << packet_to_json(p).dump() << '\n';
}

inline void write_trace_jsonl(const std::string& path, std::span<const PacketRecord> packets) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw Error("io_error", "cannot open " + path + " for writing");
    write_trace_jsonl(os, packets);
}

inline std::vector<PacketRecord> read_trace_jsonl(std::istream& is,
                                                  const std::string& source = "<stream>") {
    std::vector<PacketRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            PacketRecord p;
            p.timestamp = j.at("timestamp").get<double>();
            p.src_ip = j.at("src_ip").get<std::string>();
            p.dst_ip = j.at("dst_ip").get<std::string>();
            p.src_port = j.at("src_port").get<std::uint16_t>();
            p.dst_port = j.at("dst_port").get<std::uint16_t>();
            p.protocol = protocol_from_name(j.at("protocol").get<std::string>());
            p.length_bytes = j.at("length_bytes").get<std::uint32_t>();
            p.tcp_flags = TcpFlags::parse(j.at("tcp_flags").get<std::string>());
            if (p.protocol != Protocol::Tcp && p.tcp_flags.any())
                throw Error("invalid_record", "tcp_flags set on non-TCP packet");
            out.push_back(std::move(p));
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(source, lineno, e.what());
        }
    }
    return out;
}

inline std::vector<PacketRecord> read_trace_jsonl_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw Error("io_error", "cannot open " + path);
    return read_trace_jsonl(is, path);
}

// --- feature vectors: CSV, fixed 22-column layout ---------------------------

inline std::string features_csv_header() {
    std::string h;
    for (auto name : kFeatureNames) {
        h += name;
        h += ',';
    }
    h += "label";
    return h;
}

inline std::string feature_vector_to_csv(const FeatureVector& fv) {
    std::string line;
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        if (i == kProtocolIdx)
            line += to_name(fv.protocol());
        else if (i == kServiceIdx)
            line += to_name(fv.service());
        else if (i == kFlagIdx)
            line += to_name(fv.flag());
        else
            line += format_double(fv.values[i]);
        line += ',';
    }
    line += std::to_string(static_cast<unsigned>(fv.label));
    return line;
}

inline void write_features_csv(std::ostream& os, std::span<const FeatureVector> rows) {
    os << features_csv_header() << '\n';
    for (const auto& fv : rows)
        os << feature_vector_to_csv(fv) << '\n';
}

inline void write_features_csv(const std::string& path, std::span<const FeatureVector> rows) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw Error("io_error", "cannot open " + path + " for writing");
    write_features_csv(os, rows);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    cells.push_back(cell);
    return cells;
}

inline std::vector<FeatureVector> read_features_csv(std::istream& is,
                                                    const std::string& source = "<stream>") {
    std::vector<FeatureVector> out;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(is, line))
        return out;
    ++lineno;
    if (split_csv_line(line) != split_csv_line(features_csv_header()))
        throw ParseError(source, lineno, "unexpected CSV header");
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != kFeatureCount + 1)
            throw ParseError(source, lineno,
                             "expected " + std::to_string(kFeatureCount + 1) + " columns, got " +
                                 std::to_string(cells.size()));
        try {
            FeatureVector fv;
            for (std::size_t i = 0; i < kFeatureCount; ++i) {
                if (i == kProtocolIdx)
                    fv.values[i] = static_cast<double>(
                        static_cast<std::uint8_t>(protocol_from_name(cells[i])));
                else if (i == kServiceIdx)
                    fv.values[i] =
                        static_cast<double>(static_cast<std::uint8_t>(service_from_name(cells[i])));
                else if (i == kFlagIdx)
                    fv.values[i] =
                        static_cast<double>(static_cast<std::uint8_t>(flag_from_name(cells[i])));
                else
                    fv.values[i] = std::stod(cells[i]);
            }
            const int label = std::stoi(cells[kFeatureCount]);
            if (label < 0 || label >= static_cast<int>(kClassCount))
                throw Error("invalid_record", "label out of range");
            fv.label = static_cast<ClassId>(label);
            out.push_back(fv);
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(source, lineno, e.what());
        }
    }
    return out;
}

inline std::vector<FeatureVector> read_features_csv_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw Error("io_error", "cannot open " + path);
    return read_features_csv(is, path);
}

// --- label rules: JSON -------------------------------------------------------

inline nlohmann::ordered_json rule_to_json(const LabelRule& r) {
    nlohmann::ordered_json j;
    j["class"] = static_cast<unsigned>(r.cls);
    if (r.src_ip) j["src_ip"] = *r.src_ip;
    if (r.dst_ip) j["dst_ip"] = *r.dst_ip;
    if (r.service) j["service"] = to_name(*r.service);
    if (r.flag) j["flag"] = to_name(*r.flag);
    if (r.min_src_bytes) j["min_src_bytes"] = *r.min_src_bytes;
    if (r.max_src_bytes) j["max_src_bytes"] = *r.max_src_bytes;
    return j;
}

inline nlohmann::ordered_json rules_to_json(const LabelRuleSet& rules) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : rules.rules)
        arr.push_back(rule_to_json(r));
    return arr;
}

inline LabelRuleSet rules_from_json(const nlohmann::json& arr) {
    LabelRuleSet rs;
    for (const auto& j : arr) {
        LabelRule r;
        const int cls = j.at("class").get<int>();
        if (cls < 0 || cls >= static_cast<int>(kClassCount))
            throw Error("invalid_record", "rule class out of range");
        r.cls = static_cast<ClassId>(cls);
        if (j.contains("src_ip")) r.src_ip = j["src_ip"].get<std::string>();
        if (j.contains("dst_ip")) r.dst_ip = j["dst_ip"].get<std::string>();
        if (j.contains("service")) r.service = service_from_name(j["service"].get<std::string>());
        if (j.contains("flag")) r.flag = flag_from_name(j["flag"].get<std::string>());
        if (j.contains("min_src_bytes")) r.min_src_bytes = j["min_src_bytes"].get<std::uint64_t>();
        if (j.contains("max_src_bytes")) r.max_src_bytes = j["max_src_bytes"].get<std::uint64_t>();
        rs.rules.push_back(std::move(r));
    }
    rs.validate();
    return rs;
}

inline void write_rules_json(const std::string& path, const LabelRuleSet& rules) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw Error("io_error", "cannot open " + path + " for writing");
    os << rules_to_json(rules).dump(2) << '\n';
}

inline LabelRuleSet read_rules_json(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw Error("io_error", "cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw ParseError(path, 0, e.what());
    }
    return rules_from_json(j);
}

} // namespace bcid
