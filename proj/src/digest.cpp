#include "blade/digest.hpp"

#include <openssl/evp.h>

#include <stdexcept>

namespace blade {

Digest sha256(const void* data, size_t len) {
    Digest out{};
    unsigned int out_len = 0;
    if (EVP_Digest(data, len, out.data(), &out_len, EVP_sha256(), nullptr) != 1 || out_len != 32) {
        throw std::runtime_error("sha256 failed");
    }
    return out;
}

std::string to_hex(const Digest& d) {
    static const char* hex = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (uint8_t b : d) {
        s.push_back(hex[b >> 4]);
        s.push_back(hex[b & 0xf]);
    }
    return s;
}

int leading_zero_bits(const Digest& d) {
    int bits = 0;
    for (uint8_t b : d) {
        if (b == 0) {
            bits += 8;
            continue;
        }
        for (int i = 7; i >= 0; --i) {
            if (b & (1u << i)) return bits;
            ++bits;
        }
    }
    return bits;
}

} // namespace blade
