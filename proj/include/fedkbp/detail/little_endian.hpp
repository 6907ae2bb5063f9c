#pragma once

#include <cstdint>
#include <cstring>
#include <vector>

#include "fedkbp/errors.hpp"

// Little-endian byte packing helpers shared by the wire protocol and the
// checkpoint format. Explicit byte shifts keep the layout independent of
// host endianness.

namespace fedkbp::detail {

inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

// Cursor-based reader; all get_* throw ProtocolError on underrun.
struct ByteReader {
    const std::uint8_t* data = nullptr;
    std::size_t size = 0;
    std::size_t pos = 0;

    std::size_t remaining() const { return size - pos; }

    void require(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw ProtocolError(std::string("truncated frame while reading ") + what);
        }
    }

    std::uint8_t get_u8(const char* what) {
        require(1, what);
        return data[pos++];
    }

    std::uint16_t get_u16(const char* what) {
        require(2, what);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(data[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += 2;
        return v;
    }

    std::uint32_t get_u32(const char* what) {
        require(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += 4;
        return v;
    }

    std::uint64_t get_u64(const char* what) {
        require(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += 8;
        return v;
    }

    float get_f32(const char* what) {
        const std::uint32_t bits = get_u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    double get_f64(const char* what) {
        const std::uint64_t bits = get_u64(what);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
};

}  // namespace fedkbp::detail
