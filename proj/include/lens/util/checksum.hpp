#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lens {

// FNV-1a 64-bit. Used for artifact provenance headers; not cryptographic.
class Fnv1a {
public:
    void update(const void* data, size_t len) {
        const uint8_t* p = static_cast<const uint8_t*>(data);
        for (size_t i = 0; i < len; ++i) {
            hash_ ^= p[i];
            hash_ *= 0x100000001b3ULL;
        }
    }
    void update(const std::string& s) { update(s.data(), s.size()); }
    uint64_t digest() const { return hash_; }

private:
    uint64_t hash_ = 0xcbf29ce484222325ULL;
};

uint64_t fnv1a(const void* data, size_t len);
uint64_t fnv1a(const std::string& s);

// Checksum of a file's full content. Throws std::runtime_error if unreadable.
uint64_t file_checksum(const std::string& path);

} // namespace lens
