#pragma once

// Shared fixtures: synthetic Ethernet/IPv4 frames and classic-pcap buffers
// built in memory, so tests own their inputs end to end.

#include "lens/ingest/packet.hpp"
#include "lens/util/rng.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace testsup {

inline void put_be16(std::vector<uint8_t>& v, uint16_t x) {
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x & 0xff));
}

inline void put_be32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x >> 24));
    v.push_back(static_cast<uint8_t>((x >> 16) & 0xff));
    v.push_back(static_cast<uint8_t>((x >> 8) & 0xff));
    v.push_back(static_cast<uint8_t>(x & 0xff));
}

inline void put_le32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x & 0xff));
    v.push_back(static_cast<uint8_t>((x >> 8) & 0xff));
    v.push_back(static_cast<uint8_t>((x >> 16) & 0xff));
    v.push_back(static_cast<uint8_t>(x >> 24));
}

// Ethernet II + IPv4 + UDP frame with fixed nonzero checksum fields.
inline std::vector<uint8_t> udp_frame(uint32_t src_ip, uint32_t dst_ip, uint16_t sport,
                                      uint16_t dport, const std::vector<uint8_t>& payload) {
    std::vector<uint8_t> f;
    for (int i = 0; i < 6; ++i) f.push_back(0xaa);
    for (int i = 0; i < 6; ++i) f.push_back(0xbb);
    put_be16(f, 0x0800);
    uint16_t total = static_cast<uint16_t>(20 + 8 + payload.size());
    f.push_back(0x45);
    f.push_back(0x00);
    put_be16(f, total);
    put_be16(f, 0xabcd); // id
    put_be16(f, 0x0000);
    f.push_back(64);   // ttl
    f.push_back(17);   // udp
    put_be16(f, 0xffff); // ip checksum (nonzero so anonymization is visible)
    put_be32(f, src_ip);
    put_be32(f, dst_ip);
    put_be16(f, sport);
    put_be16(f, dport);
    put_be16(f, static_cast<uint16_t>(8 + payload.size()));
    put_be16(f, 0x1234); // udp checksum
    f.insert(f.end(), payload.begin(), payload.end());
    return f;
}

inline std::vector<uint8_t> tcp_frame(uint32_t src_ip, uint32_t dst_ip, uint16_t sport,
                                      uint16_t dport, const std::vector<uint8_t>& payload,
                                      uint32_t seq = 1000) {
    std::vector<uint8_t> f;
    for (int i = 0; i < 6; ++i) f.push_back(0xaa);
    for (int i = 0; i < 6; ++i) f.push_back(0xbb);
    put_be16(f, 0x0800);
    uint16_t total = static_cast<uint16_t>(20 + 20 + payload.size());
    f.push_back(0x45);
    f.push_back(0x00);
    put_be16(f, total);
    put_be16(f, 0xabce);
    put_be16(f, 0x0000);
    f.push_back(64);
    f.push_back(6); // tcp
    put_be16(f, 0xffff);
    put_be32(f, src_ip);
    put_be32(f, dst_ip);
    put_be16(f, sport);
    put_be16(f, dport);
    put_be32(f, seq);
    put_be32(f, 0); // ack
    f.push_back(0x50); // data offset 5
    f.push_back(0x18); // PSH|ACK
    put_be16(f, 8192);
    put_be16(f, 0xbeef); // tcp checksum
    put_be16(f, 0);      // urgent
    f.insert(f.end(), payload.begin(), payload.end());
    return f;
}

// Classic pcap (little-endian variant, linktype 1) over the given frames.
inline std::vector<uint8_t> pcap_bytes(const std::vector<std::vector<uint8_t>>& frames) {
    std::vector<uint8_t> b;
    put_le32(b, 0xa1b2c3d4);
    put_le32(b, 0x00040002); // version 2.4 as two LE u16
    put_le32(b, 0);          // thiszone
    put_le32(b, 0);          // sigfigs
    put_le32(b, 65535);      // snaplen
    put_le32(b, 1);          // LINKTYPE_ETHERNET
    uint32_t ts = 1700000000;
    for (const auto& f : frames) {
        put_le32(b, ts++);
        put_le32(b, 0);
        put_le32(b, static_cast<uint32_t>(f.size()));
        put_le32(b, static_cast<uint32_t>(f.size()));
        b.insert(b.end(), f.begin(), f.end());
    }
    return b;
}

inline void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<uint8_t> random_payload(lens::Rng& rng, size_t lo, size_t hi) {
    size_t n = lo + static_cast<size_t>(rng.below(hi - lo + 1));
    std::vector<uint8_t> p(n);
    for (auto& byte : p) byte = static_cast<uint8_t>(rng.below(256));
    return p;
}

// A capture with `flows` bidirectional conversations of 1-5 packets each,
// deterministic in `seed`; useful wherever a nontrivial input is needed.
inline std::vector<uint8_t> synthetic_capture(uint64_t seed, int flows) {
    lens::Rng rng(seed);
    std::vector<std::vector<uint8_t>> frames;
    for (int fl = 0; fl < flows; ++fl) {
        uint32_t src = 0x0a000001u + static_cast<uint32_t>(fl);
        uint32_t dst = 0xc0a80101u + static_cast<uint32_t>(rng.below(8));
        uint16_t sport = static_cast<uint16_t>(1024 + rng.below(3000));
        uint16_t dport = static_cast<uint16_t>(rng.bernoulli(0.5) ? 443 : 53);
        bool tcp = rng.bernoulli(0.5);
        int n = 1 + static_cast<int>(rng.below(5));
        for (int p = 0; p < n; ++p) {
            auto payload = random_payload(rng, 6, 40);
            frames.push_back(tcp ? tcp_frame(src, dst, sport, dport, payload,
                                             1000 + static_cast<uint32_t>(p))
                                 : udp_frame(src, dst, sport, dport, payload));
            if (rng.bernoulli(0.5)) {
                auto back = random_payload(rng, 6, 40);
                frames.push_back(tcp ? tcp_frame(dst, src, dport, sport, back,
                                                 2000 + static_cast<uint32_t>(p))
                                     : udp_frame(dst, src, dport, sport, back));
            }
        }
    }
    return pcap_bytes(frames);
}

} // namespace testsup
