#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bcid/errors.hpp"

namespace bcid {

enum class Protocol : std::uint8_t { Tcp = 0, Udp = 1, Icmp = 2 };

enum class Service : std::uint8_t { EthP2p = 0, EthRpc = 1, Http = 2, Ssh = 3, Other = 4 };

enum class ConnFlag : std::uint8_t { SF = 0, S0 = 1, REJ = 2, OTH = 3 };

enum class ClassId : std::uint8_t { Normal = 0, Bp = 1, Dos = 2, Fot = 3 };

inline constexpr std::size_t kClassCount = 4;

inline constexpr std::array<std::string_view, 3> kProtocolNames = {"tcp", "udp", "icmp"};
inline constexpr std::array<std::string_view, 5> kServiceNames = {"eth-p2p", "eth-rpc", "http",
                                                                  "ssh", "other"};
inline constexpr std::array<std::string_view, 4> kConnFlagNames = {"SF", "S0", "REJ", "OTH"};

inline std::string_view to_name(Protocol p) { return kProtocolNames[static_cast<std::size_t>(p)]; }
inline std::string_view to_name(Service s) { return kServiceNames[static_cast<std::size_t>(s)]; }
inline std::string_view to_name(ConnFlag f) { return kConnFlagNames[static_cast<std::size_t>(f)]; }

inline Protocol protocol_from_name(std::string_view s) {
    for (std::size_t i = 0; i < kProtocolNames.size(); ++i)
        if (kProtocolNames[i] == s)
            return static_cast<Protocol>(i);
    throw UnknownCategory("protocol '" + std::string(s) + "'");
}

inline Service service_from_name(std::string_view s) {
    for (std::size_t i = 0; i < kServiceNames.size(); ++i)
        if (kServiceNames[i] == s)
            return static_cast<Service>(i);
    throw UnknownCategory("service '" + std::string(s) + "'");
}

inline ConnFlag flag_from_name(std::string_view s) {
    for (std::size_t i = 0; i < kConnFlagNames.size(); ++i)
        if (kConnFlagNames[i] == s)
            return static_cast<ConnFlag>(i);
    throw UnknownCategory("flag '" + std::string(s) + "'");
}

struct TcpFlags {
    bool syn = false;
    bool ack = false;
    bool fin = false;
    bool rst = false;

    bool any() const { return syn || ack || fin || rst; }
    bool operator==(const TcpFlags&) const = default;

    // Compact serialization, fixed S/A/F/R order.
    std::string str() const {
        std::string s;
        if (syn) s += 'S';
        if (ack) s += 'A';
        if (fin) s += 'F';
        if (rst) s += 'R';
        return s;
    }

    static TcpFlags parse(std::string_view s) {
        TcpFlags f;
        for (char c : s) {
            switch (c) {
            case 'S': f.syn = true; break;
            case 'A': f.ack = true; break;
            case 'F': f.fin = true; break;
            case 'R': f.rst = true; break;
            default: throw UnknownCategory(std::string("tcp flag '") + c + "'");
            }
        }
        return f;
    }
};

struct PacketRecord {
    double timestamp = 0.0; // seconds from trace start
    std::string src_ip;
    std::string dst_ip;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    Protocol protocol = Protocol::Tcp;
    std::uint32_t length_bytes = 0;
    TcpFlags tcp_flags; // empty whenever protocol != Tcp

    bool operator==(const PacketRecord&) const = default;
};

struct FiveTuple {
    std::string src_ip;
    std::string dst_ip;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    Protocol protocol = Protocol::Tcp;

    auto operator<=>(const FiveTuple&) const = default;
};

// Well-known ports of the emulated network. 30303 is the Ethereum P2P
// listener, 8545 the JSON-RPC endpoint.
inline Service service_for_port(std::uint16_t port) {
    switch (port) {
    case 30303: return Service::EthP2p;
    case 8545: return Service::EthRpc;
    case 80: return Service::Http;
    case 22: return Service::Ssh;
    default: return Service::Other;
    }
}

inline Service service_of(const FiveTuple& t) {
    const Service by_dst = service_for_port(t.dst_port);
    if (by_dst != Service::Other)
        return by_dst;
    return service_for_port(t.src_port);
}

struct ConnectionRecord {
    FiveTuple five_tuple;
    double start_time = 0.0;
    double duration = 0.0;
    Service service = Service::Other;
    std::uint64_t src_bytes = 0;
    std::uint64_t dst_bytes = 0;
    ConnFlag flag = ConnFlag::OTH;

    bool operator==(const ConnectionRecord&) const = default;
};

// A tumbling window of assembled connections. Windows are aligned to t=0 of
// the trace and are exactly window_length long.
struct Frame {
    std::uint64_t frame_index = 0;
    double window_start = 0.0;
    double window_length = 2.0;
    std::vector<ConnectionRecord> connections; // sorted by (start_time, five_tuple)
};

namespace detail {

// Bidirectional episode key: endpoints sorted so both directions of a flow
// land in the same bucket.
struct EpisodeKey {
    std::string ip_a, ip_b;
    std::uint16_t port_a = 0, port_b = 0;
    Protocol protocol = Protocol::Tcp;

    auto operator<=>(const EpisodeKey&) const = default;

    static EpisodeKey of(const PacketRecord& p) {
        EpisodeKey k;
        k.protocol = p.protocol;
        if (std::tie(p.src_ip, p.src_port) <= std::tie(p.dst_ip, p.dst_port)) {
            k.ip_a = p.src_ip; k.port_a = p.src_port;
            k.ip_b = p.dst_ip; k.port_b = p.dst_port;
        } else {
            k.ip_a = p.dst_ip; k.port_a = p.dst_port;
            k.ip_b = p.src_ip; k.port_b = p.src_port;
        }
        return k;
    }
};

struct Episode {
    FiveTuple tuple; // oriented by the first packet seen
    double first_ts = 0.0;
    double last_ts = 0.0;
    std::uint64_t fwd_bytes = 0;
    std::uint64_t rev_bytes = 0;
    bool saw_syn = false;          // plain SYN from the initiator
    bool saw_synack = false;       // SYN+ACK from the responder
    bool saw_responder_rst = false;

    void start(const PacketRecord& p) {
        tuple = {p.src_ip, p.dst_ip, p.src_port, p.dst_port, p.protocol};
        first_ts = last_ts = p.timestamp;
        fwd_bytes = rev_bytes = 0;
        saw_syn = saw_synack = saw_responder_rst = false;
        add(p);
    }

    void add(const PacketRecord& p) {
        last_ts = p.timestamp;
        const bool forward = p.src_ip == tuple.src_ip && p.src_port == tuple.src_port;
        (forward ? fwd_bytes : rev_bytes) += p.length_bytes;
        if (p.protocol == Protocol::Tcp) {
            if (forward && p.tcp_flags.syn && !p.tcp_flags.ack)
                saw_syn = true;
            if (!forward && p.tcp_flags.syn && p.tcp_flags.ack)
                saw_synack = true;
            if (!forward && p.tcp_flags.rst)
                saw_responder_rst = true;
        }
    }

    ConnectionRecord close() const {
        ConnectionRecord c;
        c.five_tuple = tuple;
        c.start_time = first_ts;
        c.duration = last_ts - first_ts;
        c.service = service_of(tuple);
        c.src_bytes = fwd_bytes;
        c.dst_bytes = rev_bytes;
        if (tuple.protocol != Protocol::Tcp)
            c.flag = ConnFlag::OTH;
        else if (saw_syn && saw_synack)
            c.flag = ConnFlag::SF;
        else if (saw_syn && saw_responder_rst)
            c.flag = ConnFlag::REJ;
        else if (saw_syn)
            c.flag = ConnFlag::S0;
        else
            c.flag = ConnFlag::OTH;
        return c;
    }
};

} // namespace detail

// Groups packets (sorted by timestamp) into connection episodes. An episode
// ends on FIN/RST or when the gap to the next packet of the same flow
// exceeds idle_timeout. Output is sorted by (start_time, five_tuple).
inline std::vector<ConnectionRecord> assemble_connections(std::span<const PacketRecord> packets,
                                                          double idle_timeout = 1.0) {
    std::vector<ConnectionRecord> out;
    std::map<detail::EpisodeKey, detail::Episode> open;

    for (const PacketRecord& p : packets) {
        const auto key = detail::EpisodeKey::of(p);
        auto it = open.find(key);
        if (it != open.end() && p.timestamp - it->second.last_ts > idle_timeout) {
            out.push_back(it->second.close());
            open.erase(it);
            it = open.end();
        }
        if (it == open.end()) {
            detail::Episode ep;
            ep.start(p);
            it = open.emplace(key, std::move(ep)).first;
        } else {
            it->second.add(p);
        }
        if (p.protocol == Protocol::Tcp && (p.tcp_flags.fin || p.tcp_flags.rst)) {
            out.push_back(it->second.close());
            open.erase(it);
        }
    }
    for (const auto& [key, ep] : open)
        out.push_back(ep.close());

    std::sort(out.begin(), out.end(), [](const ConnectionRecord& a, const ConnectionRecord& b) {
        if (a.start_time != b.start_time)
            return a.start_time < b.start_time;
        return a.five_tuple < b.five_tuple;
    });
    return out;
}

// Cuts a sorted trace into tumbling frames aligned to t=0 and assembles each
// window's packets independently. Every packet lands in exactly one frame.
inline std::vector<Frame> make_frames(std::span<const PacketRecord> packets,
                                      double frame_length = 2.0, double idle_timeout = 1.0) {
    if (frame_length <= 0.0)
        throw InvalidConfig("frame_length must be positive");
    std::vector<Frame> frames;
    if (packets.empty())
        return frames;

    double prev_ts = packets.front().timestamp;
    std::size_t begin = 0;
    std::uint64_t current_idx = static_cast<std::uint64_t>(packets.front().timestamp / frame_length);

    auto flush = [&](std::size_t end, std::uint64_t idx) {
        Frame f;
        f.frame_index = idx;
        f.window_start = static_cast<double>(idx) * frame_length;
        f.window_length = frame_length;
        f.connections = assemble_connections(packets.subspan(begin, end - begin), idle_timeout);
        frames.push_back(std::move(f));
        begin = end;
    };

    // Leading empty frames keep the frame_index == position invariant.
    for (std::uint64_t idx = 0; idx < current_idx; ++idx)
        frames.push_back(Frame{idx, static_cast<double>(idx) * frame_length, frame_length, {}});

    for (std::size_t i = 0; i < packets.size(); ++i) {
        const PacketRecord& p = packets[i];
        if (p.timestamp < prev_ts)
            throw UnsortedInput("packet timestamps decrease at record " + std::to_string(i));
        prev_ts = p.timestamp;
        const auto idx = static_cast<std::uint64_t>(p.timestamp / frame_length);
        while (idx > current_idx) {
            flush(i, current_idx);
            ++current_idx;
        }
    }
    flush(packets.size(), current_idx);
    return frames;
}

} // namespace bcid
