#include "lens/util/checksum.hpp"

#include <fstream>
#include <stdexcept>

namespace lens {

uint64_t fnv1a(const void* data, size_t len) {
    Fnv1a h;
    h.update(data, len);
    return h.digest();
}

uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

uint64_t file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file for checksum: " + path);
    Fnv1a h;
    char buf[65536];
    while (in) {
        in.read(buf, sizeof(buf));
        h.update(buf, static_cast<size_t>(in.gcount()));
    }
    return h.digest();
}

} // namespace lens
