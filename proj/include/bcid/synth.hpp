#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bcid/errors.hpp"
#include "bcid/features.hpp"
#include "bcid/rng.hpp"
#include "bcid/traffic.hpp"

namespace bcid {

struct AttackConfig {
    ClassId kind = ClassId::Dos; // Bp, Dos or Fot
    double start = 0.0;          // seconds into the capture
    double intensity = 10.0;     // events/second
    std::string attacker_ip = "10.9.9.9";
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    double duration = 20.0;
    std::uint8_t node_count = 3;
    double benign_tx_rate = 4.0; // connections/second per node, all benign kinds
    std::optional<AttackConfig> attack;

    void validate() const {
        if (duration <= 0.0)
            throw InvalidConfig("duration must be positive");
        if (node_count < 1)
            throw InvalidConfig("node_count must be >= 1");
        if (benign_tx_rate <= 0.0)
            throw InvalidConfig("benign_tx_rate must be positive");
        if (attack) {
            if (attack->kind == ClassId::Normal)
                throw InvalidConfig("attack.kind must be one of bp/dos/fot");
            if (attack->start < 0.0 || attack->start >= duration)
                throw InvalidConfig("attack.start must lie inside the capture");
            if (attack->intensity <= 0.0)
                throw InvalidConfig("attack.intensity must be positive");
            if (attack->attacker_ip.empty())
                throw InvalidConfig("attacker_ip must be set");
        }
    }
};

inline std::string node_ip(std::size_t node_index) {
    return "10.0.0." + std::to_string(node_index + 1);
}

inline std::string server_ip(std::size_t node_index) {
    return "10.0.1." + std::to_string(node_index + 1);
}

inline std::string user_ip(std::size_t user_index) {
    return "10.0.2." + std::to_string(user_index + 1);
}

namespace detail {

inline std::uint16_t ephemeral_port(std::mt19937_64& g) {
    return static_cast<std::uint16_t>(uniform_index(g, 20000, 64999));
}

inline PacketRecord packet(double ts, const std::string& src, std::uint16_t sport,
                           const std::string& dst, std::uint16_t dport, std::uint32_t len,
                           TcpFlags flags) {
    PacketRecord p;
    p.timestamp = ts;
    p.src_ip = src;
    p.dst_ip = dst;
    p.src_port = sport;
    p.dst_port = dport;
    p.protocol = Protocol::Tcp;
    p.length_bytes = len;
    p.tcp_flags = flags;
    return p;
}

// Complete TCP exchange: handshake, one request, resp_packets replies, FIN.
inline void emit_tcp_connection(std::vector<PacketRecord>& out, std::mt19937_64& g, double t0,
                                const std::string& src, const std::string& dst,
                                std::uint16_t dport, std::uint32_t req_bytes,
                                std::uint32_t resp_bytes, int resp_packets) {
    const std::uint16_t sport = ephemeral_port(g);
    double t = t0;
    out.push_back(packet(t, src, sport, dst, dport, 60, {.syn = true}));
    t += uniform_range(g, 0.0005, 0.004);
    out.push_back(packet(t, dst, dport, src, sport, 60, {.syn = true, .ack = true}));
    t += uniform_range(g, 0.0005, 0.002);
    out.push_back(packet(t, src, sport, dst, dport, 60, {.ack = true}));
    t += uniform_range(g, 0.001, 0.006);
    out.push_back(packet(t, src, sport, dst, dport, req_bytes, {.ack = true}));
    const std::uint32_t chunk = std::max<std::uint32_t>(1, resp_bytes / std::max(1, resp_packets));
    for (int i = 0; i < resp_packets; ++i) {
        t += uniform_range(g, 0.001, 0.008);
        out.push_back(packet(t, dst, dport, src, sport, chunk, {.ack = true}));
    }
    t += uniform_range(g, 0.001, 0.005);
    out.push_back(packet(t, src, sport, dst, dport, 60, {.ack = true, .fin = true}));
}

// One SYN with no reply; the assembled episode closes as S0.
inline void emit_syn_only(std::vector<PacketRecord>& out, std::mt19937_64& g, double t0,
                          const std::string& src, const std::string& dst, std::uint16_t dport) {
    out.push_back(packet(t0, src, ephemeral_port(g), dst, dport, 60, {.syn = true}));
}

// Poisson arrivals on [start, end).
template <typename Emit>
void arrival_process(std::mt19937_64& g, double start, double end, double rate, Emit&& emit) {
    double t = start + exponential(g, rate);
    while (t < end) {
        emit(t);
        t += exponential(g, rate);
    }
}

} // namespace detail

// Traffic observed by one node: P2P gossip from peers, JSON-RPC transactions
// from its trustful server and users, HTTP status polls, plus the configured
// attack when this node is the victim. Pure function of the config.
inline std::vector<PacketRecord> generate_node_trace(const ScenarioConfig& cfg,
                                                     std::size_t node_index, bool is_victim) {
    const std::string self = node_ip(node_index);
    std::vector<PacketRecord> out;

    // eth-p2p block/transaction gossip between full nodes
    {
        auto g = fork_rng(cfg.seed, "synth.gossip", node_index);
        detail::arrival_process(g, 0.0, cfg.duration, 0.5 * cfg.benign_tx_rate, [&](double t) {
            std::size_t peer = node_index;
            if (cfg.node_count > 1)
                while (peer == node_index)
                    peer = uniform_index(g, 0, cfg.node_count - 1);
            const auto req = static_cast<std::uint32_t>(uniform_index(g, 200, 1400));
            const auto resp = static_cast<std::uint32_t>(uniform_index(g, 200, 1400));
            detail::emit_tcp_connection(out, g, t, node_ip(peer), self, 30303, req, resp,
                                        static_cast<int>(uniform_index(g, 1, 3)));
        });
    }

    // eth-rpc transactions and balance queries
    {
        auto g = fork_rng(cfg.seed, "synth.rpc", node_index);
        detail::arrival_process(g, 0.0, cfg.duration, 0.3 * cfg.benign_tx_rate, [&](double t) {
            const std::string src =
                bernoulli(g, 0.7) ? server_ip(node_index) : user_ip(uniform_index(g, 0, 7));
            const auto req = static_cast<std::uint32_t>(uniform_index(g, 300, 900));
            const auto resp = static_cast<std::uint32_t>(uniform_index(g, 200, 1200));
            detail::emit_tcp_connection(out, g, t, src, self, 8545, req, resp,
                                        static_cast<int>(uniform_index(g, 1, 2)));
        });
    }

    // http netstats polls and views
    {
        auto g = fork_rng(cfg.seed, "synth.http", node_index);
        detail::arrival_process(g, 0.0, cfg.duration, 0.2 * cfg.benign_tx_rate, [&](double t) {
            const std::string src = user_ip(uniform_index(g, 0, 7));
            const auto req = static_cast<std::uint32_t>(uniform_index(g, 150, 400));
            const auto resp = static_cast<std::uint32_t>(uniform_index(g, 300, 1500));
            detail::emit_tcp_connection(out, g, t, src, self, 80, req, resp, 1);
        });
    }

    if (is_victim && cfg.attack) {
        const AttackConfig& a = *cfg.attack;
        auto g = fork_rng(cfg.seed, "synth.attack", node_index);
        switch (a.kind) {
        case ClassId::Bp:
            // password retries against the RPC endpoint: short, complete, small
            detail::arrival_process(g, a.start, cfg.duration, a.intensity, [&](double t) {
                const auto req = static_cast<std::uint32_t>(uniform_index(g, 100, 160));
                const auto resp = static_cast<std::uint32_t>(uniform_index(g, 60, 120));
                detail::emit_tcp_connection(out, g, t, a.attacker_ip, self, 8545, req, resp, 1);
            });
            break;
        case ClassId::Dos:
            // SYN flood against the P2P listener
            detail::arrival_process(g, a.start, cfg.duration, a.intensity, [&](double t) {
                detail::emit_syn_only(out, g, t, a.attacker_ip, self, 30303);
            });
            break;
        case ClassId::Fot:
            // transaction flood: complete small transactions at high rate...
            detail::arrival_process(g, a.start, cfg.duration, a.intensity, [&](double t) {
                const auto req = static_cast<std::uint32_t>(uniform_index(g, 200, 400));
                detail::emit_tcp_connection(out, g, t, a.attacker_ip, self, 8545, req, 80, 1);
            });
            // ...which also inflates benign gossip while it runs
            {
                auto g2 = fork_rng(cfg.seed, "synth.fot_gossip", node_index);
                detail::arrival_process(g2, a.start, cfg.duration, 0.5 * cfg.benign_tx_rate,
                                        [&](double t) {
                                            std::size_t peer = node_index;
                                            if (cfg.node_count > 1)
                                                while (peer == node_index)
                                                    peer = uniform_index(g2, 0, cfg.node_count - 1);
                                            const auto req = static_cast<std::uint32_t>(
                                                uniform_index(g2, 200, 800));
                                            detail::emit_tcp_connection(out, g2, t, node_ip(peer),
                                                                        self, 30303, req, 400, 1);
                                        });
            }
            break;
        default:
            break;
        }
    }

    std::stable_sort(out.begin(), out.end(), [](const PacketRecord& a, const PacketRecord& b) {
        return a.timestamp < b.timestamp;
    });
    return out;
}

// Per-node traces for a scenario. The attack, when present, targets node 0.
inline std::vector<std::vector<PacketRecord>> generate_trace(const ScenarioConfig& cfg) {
    cfg.validate();
    std::vector<std::vector<PacketRecord>> traces;
    traces.reserve(cfg.node_count);
    for (std::size_t i = 0; i < cfg.node_count; ++i)
        traces.push_back(generate_node_trace(cfg, i, i == 0));
    return traces;
}

// Rules that label exactly the attack-injected connections: the attacker IP
// appears in no benign source pool.
inline LabelRuleSet scenario_label_rules(const ScenarioConfig& cfg) {
    cfg.validate();
    LabelRuleSet rs;
    if (!cfg.attack)
        return rs;
    LabelRule r;
    r.cls = cfg.attack->kind;
    r.src_ip = cfg.attack->attacker_ip;
    switch (cfg.attack->kind) {
    case ClassId::Dos:
        r.flag = ConnFlag::S0;
        break;
    case ClassId::Bp:
    case ClassId::Fot:
        r.service = Service::EthRpc;
        break;
    default:
        break;
    }
    rs.rules.push_back(std::move(r));
    return rs;
}

// Per-class sample quotas; defaults mirror the designed dataset sizes.
struct ClassTargets {
    std::array<std::size_t, kClassCount> counts = {30000, 3000, 3000, 3000};
};

// Seeded uniform downsampling without replacement, per class. Classes with
// fewer samples than their target keep everything they have.
inline std::vector<FeatureVector> downsample_by_class(std::span<const FeatureVector> samples,
                                                      const ClassTargets& targets,
                                                      std::mt19937_64& rng) {
    std::array<std::vector<std::size_t>, kClassCount> by_class;
    for (std::size_t i = 0; i < samples.size(); ++i)
        by_class[static_cast<std::size_t>(samples[i].label)].push_back(i);

    std::vector<FeatureVector> out;
    for (std::size_t c = 0; c < kClassCount; ++c) {
        auto& idx = by_class[c];
        const std::size_t take = std::min(targets.counts[c], idx.size());
        for (std::size_t i = 0; i < take; ++i) {
            const std::size_t j = uniform_index(rng, i, idx.size() - 1);
            std::swap(idx[i], idx[j]);
            out.push_back(samples[idx[i]]);
        }
    }
    // mixed order so per-class blocks do not survive into training batches
    for (std::size_t i = out.size(); i > 1; --i)
        std::swap(out[i - 1], out[uniform_index(rng, 0, i - 1)]);
    return out;
}

struct SplitResult {
    std::vector<FeatureVector> train;
    std::vector<FeatureVector> test;
};

// Seeded stratified split; both halves keep the original sample order.
inline SplitResult stratified_split(std::span<const FeatureVector> samples,
                                    double train_fraction, std::mt19937_64& rng) {
    if (train_fraction < 0.0 || train_fraction > 1.0)
        throw InvalidConfig("train_fraction must be within [0, 1]");
    std::array<std::vector<std::size_t>, kClassCount> by_class;
    for (std::size_t i = 0; i < samples.size(); ++i)
        by_class[static_cast<std::size_t>(samples[i].label)].push_back(i);

    std::vector<bool> to_train(samples.size(), false);
    for (auto& idx : by_class) {
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[uniform_index(rng, 0, i - 1)]);
        const auto n_train = static_cast<std::size_t>(
            train_fraction * static_cast<double>(idx.size()) + 0.5);
        for (std::size_t i = 0; i < n_train; ++i)
            to_train[idx[i]] = true;
    }

    SplitResult out;
    for (std::size_t i = 0; i < samples.size(); ++i)
        (to_train[i] ? out.train : out.test).push_back(samples[i]);
    return out;
}

// One node's four-state capture plan: a shared normal run plus one run per
// attack in which this node is the victim, merged and downsampled.
struct DatasetBuildConfig {
    std::uint64_t seed = 1;
    std::size_t node_count = 3;
    double normal_duration = 300.0;
    double attack_duration = 120.0;
    double attack_start = 2.0;
    double benign_tx_rate = 4.0;
    double bp_intensity = 5.0;
    double dos_intensity = 15.0;
    double fot_intensity = 170.0;
    std::string attacker_ip = "10.9.9.9";
    double frame_length = 2.0;
    double idle_timeout = 1.0;
    std::vector<ClassTargets> per_node_targets; // empty -> defaults for every node
};

inline std::vector<FeatureVector> labeled_vectors(std::span<const PacketRecord> trace,
                                                  const LabelRuleSet& rules, double frame_length,
                                                  double idle_timeout) {
    std::vector<FeatureVector> out;
    for (const auto& s : extract_trace_samples(trace, rules, frame_length, idle_timeout))
        out.push_back(s.features);
    return out;
}

inline std::vector<std::vector<FeatureVector>> build_datasets(const DatasetBuildConfig& cfg) {
    if (cfg.node_count == 0)
        throw InvalidConfig("node_count must be >= 1");

    std::vector<std::vector<FeatureVector>> datasets(cfg.node_count);

    ScenarioConfig normal_cfg;
    normal_cfg.seed = mix64(cfg.seed ^ fnv1a("capture.normal"));
    normal_cfg.duration = cfg.normal_duration;
    normal_cfg.node_count = static_cast<std::uint8_t>(cfg.node_count);
    normal_cfg.benign_tx_rate = cfg.benign_tx_rate;
    const auto normal_traces = generate_trace(normal_cfg);

    const std::array<std::pair<ClassId, double>, 3> attacks = {
        std::pair{ClassId::Bp, cfg.bp_intensity},
        std::pair{ClassId::Dos, cfg.dos_intensity},
        std::pair{ClassId::Fot, cfg.fot_intensity},
    };

    for (std::size_t k = 0; k < cfg.node_count; ++k) {
        std::vector<FeatureVector> pool = labeled_vectors(normal_traces[k], LabelRuleSet{},
                                                          cfg.frame_length, cfg.idle_timeout);
        for (const auto& [kind, intensity] : attacks) {
            ScenarioConfig ac;
            ac.seed = mix64(mix64(cfg.seed ^ fnv1a("capture.attack")) +
                            (static_cast<std::uint64_t>(kind) << 8) + k);
            ac.duration = cfg.attack_duration;
            ac.node_count = static_cast<std::uint8_t>(cfg.node_count);
            ac.benign_tx_rate = cfg.benign_tx_rate;
            ac.attack = AttackConfig{kind, cfg.attack_start, intensity, cfg.attacker_ip};
            const auto traces = generate_trace(ac);
            const auto rules = scenario_label_rules(ac);
            // node k is the victim of its own attack captures (trace index 0)
            auto vecs = labeled_vectors(traces[0], rules, cfg.frame_length, cfg.idle_timeout);
            pool.insert(pool.end(), vecs.begin(), vecs.end());
        }
        const ClassTargets targets =
            cfg.per_node_targets.empty() ? ClassTargets{} : cfg.per_node_targets.at(k);
        auto rng = fork_rng(cfg.seed, "capture.downsample", k);
        datasets[k] = downsample_by_class(pool, targets, rng);
    }
    return datasets;
}

} // namespace bcid
