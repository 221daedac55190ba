#pragma once
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "blade/digest.hpp"
#include "blade/errors.hpp"

// Canonical little-endian serialization used for every hashed or dumped
// structure. Doubles travel as their IEEE-754 bit pattern.

namespace blade {

class ByteWriter {
  public:
    void u8(uint8_t v) { buf_.push_back(v); }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void bytes(const void* data, size_t n) {
        const uint8_t* p = static_cast<const uint8_t*>(data);
        buf_.insert(buf_.end(), p, p + n);
    }
    void digest(const Digest& d) { bytes(d.data(), d.size()); }

    const std::vector<uint8_t>& data() const { return buf_; }
    std::vector<uint8_t> take() { return std::move(buf_); }

  private:
    std::vector<uint8_t> buf_;
};

class ByteReader {
  public:
    ByteReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
    explicit ByteReader(const std::vector<uint8_t>& v) : data_(v.data()), size_(v.size()) {}

    uint8_t u8() {
        need(1);
        return data_[pos_++];
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    int64_t i64() { return static_cast<int64_t>(u64()); }
    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    Digest digest() {
        need(32);
        Digest d;
        std::memcpy(d.data(), data_ + pos_, 32);
        pos_ += 32;
        return d;
    }
    void skip(size_t n) {
        need(n);
        pos_ += n;
    }
    size_t remaining() const { return size_ - pos_; }
    bool done() const { return pos_ == size_; }

  private:
    void need(size_t n) const {
        if (pos_ + n > size_) throw IoError("truncated input at byte " + std::to_string(pos_));
    }
    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
};

} // namespace blade
