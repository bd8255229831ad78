#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lens {

struct InvalidHexChar : std::runtime_error {
    explicit InvalidHexChar(const std::string& what) : std::runtime_error(what) {}
};

// Lowercase hex, two digits per octet, no separators.
std::string to_hex(const uint8_t* data, size_t len);
std::string to_hex(const std::vector<uint8_t>& bytes);

// Throws InvalidHexChar on non-[0-9a-f] input or odd length.
std::vector<uint8_t> from_hex(const std::string& hex);

bool is_hex_string(const std::string& s);

} // namespace lens
