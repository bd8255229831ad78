#include "lens/util/hex.hpp"

namespace lens {

namespace {
constexpr char kDigits[] = "0123456789abcdef";

int nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
}
} // namespace

std::string to_hex(const uint8_t* data, size_t len) {
    std::string out;
    out.resize(len * 2);
    for (size_t i = 0; i < len; ++i) {
        out[2 * i] = kDigits[data[i] >> 4];
        out[2 * i + 1] = kDigits[data[i] & 0x0f];
    }
    return out;
}

std::string to_hex(const std::vector<uint8_t>& bytes) {
    return to_hex(bytes.data(), bytes.size());
}

std::vector<uint8_t> from_hex(const std::string& hex) {
    if (hex.size() % 2 != 0)
        throw InvalidHexChar("from_hex: odd-length hex string (" + std::to_string(hex.size()) + " chars)");
    std::vector<uint8_t> out(hex.size() / 2);
    for (size_t i = 0; i < out.size(); ++i) {
        int hi = nibble(hex[2 * i]);
        int lo = nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0)
            throw InvalidHexChar("from_hex: invalid hex character at position " + std::to_string(2 * i));
        out[i] = static_cast<uint8_t>((hi << 4) | lo);
    }
    return out;
}

bool is_hex_string(const std::string& s) {
    for (char c : s)
        if (nibble(c) < 0) return false;
    return true;
}

} // namespace lens
