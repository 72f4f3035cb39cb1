#pragma once

#include <string>
#include <vector>

#include "bcid/features.hpp"
#include "bcid/traffic.hpp"

namespace testutil {

inline bcid::PacketRecord pkt(double ts, std::string src, std::uint16_t sport, std::string dst,
                              std::uint16_t dport, std::uint32_t len, const char* flags = "",
                              bcid::Protocol proto = bcid::Protocol::Tcp) {
    bcid::PacketRecord p;
    p.timestamp = ts;
    p.src_ip = std::move(src);
    p.dst_ip = std::move(dst);
    p.src_port = sport;
    p.dst_port = dport;
    p.protocol = proto;
    p.length_bytes = len;
    p.tcp_flags = bcid::TcpFlags::parse(flags);
    return p;
}

inline bcid::ConnectionRecord conn(std::string src, std::uint16_t sport, std::string dst,
                                   std::uint16_t dport, bcid::Service service,
                                   bcid::ConnFlag flag, double start = 0.0,
                                   double duration = 0.01, std::uint64_t src_bytes = 100,
                                   std::uint64_t dst_bytes = 100,
                                   bcid::Protocol proto = bcid::Protocol::Tcp) {
    bcid::ConnectionRecord c;
    c.five_tuple = {std::move(src), std::move(dst), sport, dport, proto};
    c.start_time = start;
    c.duration = duration;
    c.service = service;
    c.src_bytes = src_bytes;
    c.dst_bytes = dst_bytes;
    c.flag = flag;
    return c;
}

inline bcid::Frame frame_of(std::vector<bcid::ConnectionRecord> conns, std::uint64_t index = 0) {
    bcid::Frame f;
    f.frame_index = index;
    f.window_start = static_cast<double>(index) * 2.0;
    f.window_length = 2.0;
    std::sort(conns.begin(), conns.end(),
              [](const bcid::ConnectionRecord& a, const bcid::ConnectionRecord& b) {
                  if (a.start_time != b.start_time)
                      return a.start_time < b.start_time;
                  return a.five_tuple < b.five_tuple;
              });
    f.connections = std::move(conns);
    return f;
}

} // namespace testutil
