#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace cavtrack {

// FNV-1a 64-bit, used to stamp output files with the configuration that
// produced them.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[h & 0xF];
        h >>= 4;
    }
    return s;
}

}  // namespace cavtrack
