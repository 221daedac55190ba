#pragma once
#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace blade {

using Digest = std::array<uint8_t, 32>;

Digest sha256(const void* data, size_t len);
inline Digest sha256(const std::vector<uint8_t>& bytes) { return sha256(bytes.data(), bytes.size()); }
inline Digest sha256(const std::string& s) { return sha256(s.data(), s.size()); }

std::string to_hex(const Digest& d);

// number of leading zero bits, MSB of byte 0 first
int leading_zero_bits(const Digest& d);

// lexicographic compare on digest bytes
inline bool digest_less(const Digest& a, const Digest& b) { return a < b; }

} // namespace blade
