#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace slca {

inline std::uint64_t fnv1a_init() { return 14695981039346656037ULL; }

inline std::uint64_t fnv1a_update(std::uint64_t h, const void* bytes, std::size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(const void* bytes, std::size_t len) {
    return fnv1a_update(fnv1a_init(), bytes, len);
}

inline std::uint64_t fnv1a(std::string_view s) { return fnv1a(s.data(), s.size()); }

inline std::string digest_hex(std::uint64_t h) {
    static const char* hexd = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = hexd[h & 0xf];
        h >>= 4;
    }
    return s;
}

}  // namespace slca
