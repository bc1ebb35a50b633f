// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gup/common.hpp"

namespace gup::detail {

// All container formats in this project are little-endian on disk. The
// helpers below assume a little-endian host, which covers every target this
// library is built for; a mismatch is caught at file-magic time on load.

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os) throw IoError("write failed");
}

inline void read_bytes(std::istream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) throw IoError("unexpected end of file");
}

inline void write_u8(std::ostream& os, std::uint8_t v) { write_bytes(os, &v, 1); }
inline void write_u32(std::ostream& os, std::uint32_t v) { write_bytes(os, &v, 4); }
inline void write_u64(std::ostream& os, std::uint64_t v) { write_bytes(os, &v, 8); }

inline std::uint8_t read_u8(std::istream& is) {
    std::uint8_t v;
    read_bytes(is, &v, 1);
    return v;
}
inline std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v;
    read_bytes(is, &v, 4);
    return v;
}
inline std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v;
    read_bytes(is, &v, 8);
    return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    write_bytes(os, s.data(), s.size());
}

inline std::string read_string(std::istream& is, std::size_t max_len = 1u << 20) {
    const std::uint32_t n = read_u32(is);
    if (n > max_len) throw IoError("string length " + std::to_string(n) + " exceeds limit");
    std::string s(n, '\0');
    if (n > 0) read_bytes(is, s.data(), n);
    return s;
}

template <class S>
constexpr std::uint8_t dtype_tag();
template <>
constexpr std::uint8_t dtype_tag<float>() {
    return 0;
}
template <>
constexpr std::uint8_t dtype_tag<double>() {
    return 1;
}
inline constexpr std::uint8_t kByteTag = 2;

inline std::size_t dtype_size(std::uint8_t tag) {
    switch (tag) {
        case 0: return 4;
        case 1: return 8;
        case 2: return 1;
        default: throw IoError("unknown dtype tag " + std::to_string(tag));
    }
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    return os;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return is;
}

}  // namespace gup::detail
