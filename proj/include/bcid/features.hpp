#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bcid/errors.hpp"
#include "bcid/traffic.hpp"

namespace bcid {

inline constexpr std::size_t kFeatureCount = 21;

// Column order of every feature vector and CSV file in the project.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "duration",
    "protocol_type",
    "service",
    "src_bytes",
    "dst_bytes",
    "flag",
    "count",
    "srv_count",
    "serror_rate",
    "same_srv_rate",
    "diff_srv_rate",
    "srv_serror_rate",
    "srv_diff_host_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate",
    "dst_host_serror_rate",
    "dst_host_srv_diff_host_rate",
    "dst_host_srv_serror_rate",
};

inline constexpr std::size_t kProtocolIdx = 1;
inline constexpr std::size_t kServiceIdx = 2;
inline constexpr std::size_t kFlagIdx = 5;

inline constexpr bool is_discrete_feature(std::size_t idx) {
    return idx == kProtocolIdx || idx == kServiceIdx || idx == kFlagIdx;
}

// Indices of the 18 continuous features, in column order.
inline constexpr std::array<std::size_t, 18> kContinuousIdx = {0, 3, 4, 6, 7, 8, 9, 10, 11,
                                                               12, 13, 14, 15, 16, 17, 18, 19, 20};

struct FeatureVector {
    // Discrete slots (protocol_type, service, flag) hold their category code.
    std::array<double, kFeatureCount> values{};
    ClassId label = ClassId::Normal;

    Protocol protocol() const { return static_cast<Protocol>(values[kProtocolIdx]); }
    Service service() const { return static_cast<Service>(values[kServiceIdx]); }
    ConnFlag flag() const { return static_cast<ConnFlag>(values[kFlagIdx]); }

    bool operator==(const FeatureVector&) const = default;
};

// All window statistics are computed over frame.connections only; the
// current connection is a member of every reference set it keys.
inline FeatureVector extract_features(const Frame& frame, const ConnectionRecord& current) {
    bool found = false;
    for (const auto& c : frame.connections)
        if (c == current) {
            found = true;
            break;
        }
    if (!found)
        throw CurrentNotInFrame("current connection is not in frame " +
                                std::to_string(frame.frame_index));

    std::uint64_t n_src = 0, n_src_s0 = 0, n_src_same_srv = 0;
    std::uint64_t n_srv = 0, n_srv_s0 = 0, n_srv_diff_src = 0, n_srv_diff_dst = 0;
    std::uint64_t n_dst = 0, n_dst_s0 = 0, n_dst_same_srv = 0, n_dst_same_port = 0;

    for (const auto& c : frame.connections) {
        const bool s0 = c.flag == ConnFlag::S0;
        if (c.five_tuple.src_ip == current.five_tuple.src_ip) {
            ++n_src;
            if (s0) ++n_src_s0;
            if (c.service == current.service) ++n_src_same_srv;
        }
        if (c.service == current.service) {
            ++n_srv;
            if (s0) ++n_srv_s0;
            if (c.five_tuple.src_ip != current.five_tuple.src_ip) ++n_srv_diff_src;
            if (c.five_tuple.dst_ip != current.five_tuple.dst_ip) ++n_srv_diff_dst;
        }
        if (c.five_tuple.dst_ip == current.five_tuple.dst_ip) {
            ++n_dst;
            if (s0) ++n_dst_s0;
            if (c.service == current.service) ++n_dst_same_srv;
            if (c.five_tuple.src_port == current.five_tuple.src_port) ++n_dst_same_port;
        }
    }

    auto rate = [](std::uint64_t num, std::uint64_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };

    FeatureVector fv;
    auto& v = fv.values;
    v[0] = current.duration;
    v[1] = static_cast<double>(static_cast<std::uint8_t>(current.five_tuple.protocol));
    v[2] = static_cast<double>(static_cast<std::uint8_t>(current.service));
    v[3] = static_cast<double>(current.src_bytes);
    v[4] = static_cast<double>(current.dst_bytes);
    v[5] = static_cast<double>(static_cast<std::uint8_t>(current.flag));
    v[6] = static_cast<double>(n_src);
    v[7] = static_cast<double>(n_srv);
    v[8] = rate(n_src_s0, n_src);
    v[9] = rate(n_src_same_srv, n_src);
    v[10] = rate(n_src - n_src_same_srv, n_src);
    v[11] = rate(n_srv_s0, n_srv);
    v[12] = rate(n_srv_diff_src, n_srv);
    v[13] = static_cast<double>(n_dst);
    v[14] = static_cast<double>(n_srv);
    v[15] = rate(n_dst_same_srv, n_dst);
    v[16] = rate(n_dst - n_dst_same_srv, n_dst);
    v[17] = rate(n_dst_same_port, n_dst);
    v[18] = rate(n_dst_s0, n_dst);
    v[19] = rate(n_srv_diff_dst, n_srv);
    v[20] = rate(n_srv_s0, n_srv);
    return fv;
}

// A feature vector still paired with the connection it came from. Labeling
// rules match on connection identity (attacker IPs), which the 21 features
// deliberately do not carry.
struct Sample {
    ConnectionRecord connection;
    FeatureVector features;
};

inline std::vector<Sample> extract_frame_samples(const Frame& frame) {
    std::vector<Sample> out;
    out.reserve(frame.connections.size());
    for (const auto& c : frame.connections)
        out.push_back(Sample{c, extract_features(frame, c)});
    return out;
}

struct LabelRule {
    ClassId cls = ClassId::Normal;
    std::optional<std::string> src_ip;
    std::optional<std::string> dst_ip;
    std::optional<Service> service;
    std::optional<ConnFlag> flag;
    std::optional<std::uint64_t> min_src_bytes;
    std::optional<std::uint64_t> max_src_bytes;

    bool matches(const ConnectionRecord& c) const {
        if (src_ip && *src_ip != c.five_tuple.src_ip) return false;
        if (dst_ip && *dst_ip != c.five_tuple.dst_ip) return false;
        if (service && *service != c.service) return false;
        if (flag && *flag != c.flag) return false;
        if (min_src_bytes && c.src_bytes < *min_src_bytes) return false;
        if (max_src_bytes && c.src_bytes > *max_src_bytes) return false;
        return true;
    }

    auto predicate_tuple() const {
        return std::tie(src_ip, dst_ip, service, flag, min_src_bytes, max_src_bytes);
    }
};

struct LabelRuleSet {
    std::vector<LabelRule> rules;

    void validate() const {
        for (std::size_t i = 0; i < rules.size(); ++i)
            for (std::size_t j = i + 1; j < rules.size(); ++j)
                if (rules[i].predicate_tuple() == rules[j].predicate_tuple() &&
                    rules[i].cls != rules[j].cls)
                    throw ConflictingRules("rules " + std::to_string(i) + " and " +
                                           std::to_string(j) +
                                           " share predicates but target different classes");
    }
};

// First matching rule wins; unmatched samples stay Class-0. Order preserved.
inline void label_samples(std::span<Sample> samples, const LabelRuleSet& rules) {
    rules.validate();
    for (Sample& s : samples) {
        s.features.label = ClassId::Normal;
        for (const LabelRule& r : rules.rules)
            if (r.matches(s.connection)) {
                s.features.label = r.cls;
                break;
            }
    }
}

// Full trace -> labeled samples pipeline used by the extract command.
inline std::vector<Sample> extract_trace_samples(std::span<const PacketRecord> packets,
                                                 const LabelRuleSet& rules,
                                                 double frame_length = 2.0,
                                                 double idle_timeout = 1.0) {
    std::vector<Sample> all;
    for (const Frame& f : make_frames(packets, frame_length, idle_timeout)) {
        auto samples = extract_frame_samples(f);
        label_samples(samples, rules);
        all.insert(all.end(), samples.begin(), samples.end());
    }
    return all;
}

} // namespace bcid
