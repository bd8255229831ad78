#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lens::binio {

// All artifact files are little-endian regardless of host order.

inline void put_u8(std::ostream& out, uint8_t v) { out.put(static_cast<char>(v)); }

inline void put_u16(std::ostream& out, uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    out.write(b, 2);
}

inline void put_u32(std::ostream& out, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

inline void put_u64(std::ostream& out, uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

inline void put_f32(std::ostream& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

inline void put_bytes(std::ostream& out, const std::vector<uint8_t>& v) {
    put_u32(out, static_cast<uint32_t>(v.size()));
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size()));
}

inline void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline uint8_t get_u8(std::istream& in) {
    int c = in.get();
    if (c == EOF) throw std::runtime_error("binio: unexpected end of stream");
    return static_cast<uint8_t>(c);
}

inline uint16_t get_u16(std::istream& in) {
    uint16_t v = get_u8(in);
    v = static_cast<uint16_t>(v | (static_cast<uint16_t>(get_u8(in)) << 8));
    return v;
}

inline uint32_t get_u32(std::istream& in) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(get_u8(in)) << (8 * i);
    return v;
}

inline uint64_t get_u64(std::istream& in) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(get_u8(in)) << (8 * i);
    return v;
}

inline float get_f32(std::istream& in) {
    uint32_t bits = get_u32(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline std::vector<uint8_t> get_bytes(std::istream& in) {
    uint32_t n = get_u32(in);
    std::vector<uint8_t> v(n);
    in.read(reinterpret_cast<char*>(v.data()), n);
    if (in.gcount() != static_cast<std::streamsize>(n))
        throw std::runtime_error("binio: truncated byte block");
    return v;
}

inline std::string get_string(std::istream& in) {
    uint32_t n = get_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (in.gcount() != static_cast<std::streamsize>(n))
        throw std::runtime_error("binio: truncated string");
    return s;
}

} // namespace lens::binio
