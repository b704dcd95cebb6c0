#pragma once

// CEMB binary matrix files.
//
//   offset 0   4 bytes  magic "CEMB"
//   offset 4   u32      version (1 = float32 payload, 2 = float64 payload)
//   offset 8   u32      n_rows
//   offset 12  u32      dim
//   offset 16  payload  n_rows * dim values, little-endian, row-major, no padding
//
// Encoder outputs are stored as version 1 and widened to double on load. Trained
// state (checkpoints, replay statistics) is stored as version 2 so it reloads exactly.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "conceptcil/matrix.hpp"

namespace conceptcil {

enum class CembPrecision : std::uint32_t { Float32 = 1, Float64 = 2 };

inline constexpr std::array<char, 4> kCembMagic = {'C', 'E', 'M', 'B'};
inline constexpr std::size_t kCembHeaderBytes = 16;

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const void* data, std::size_t n) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    write_file_bytes(path, text.data(), text.size());
}

inline std::string read_text_file(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return {bytes.begin(), bytes.end()};
}

}  // namespace detail

inline std::vector<unsigned char> encode_cemb(const Matrix& m, CembPrecision precision) {
    if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
        m.cols() > std::numeric_limits<std::uint32_t>::max()) {
        throw RangeError("CEMB: matrix " + m.shape() + " exceeds u32 header fields");
    }
    const std::size_t elem = precision == CembPrecision::Float32 ? 4 : 8;
    std::vector<unsigned char> out;
    out.reserve(kCembHeaderBytes + elem * m.size());
    out.insert(out.end(), kCembMagic.begin(), kCembMagic.end());
    detail::put_u32(out, static_cast<std::uint32_t>(precision));
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) {
        if (!std::isfinite(v)) throw DataError("CEMB: refusing to write non-finite value");
        if (precision == CembPrecision::Float32)
            detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        else
            detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

inline Matrix decode_cemb(const std::vector<unsigned char>& bytes, const std::string& where = "") {
    const std::string tag = where.empty() ? "CEMB" : "CEMB '" + where + "'";
    if (bytes.size() < kCembHeaderBytes) {
        throw ParseError(tag + ": truncated header at byte offset " + std::to_string(bytes.size()) +
                         " (need 16 bytes)");
    }
    if (std::memcmp(bytes.data(), kCembMagic.data(), 4) != 0) {
        throw ParseError(tag + ": bad magic at byte offset 0");
    }
    const std::uint32_t version = detail::get_u32(bytes.data() + 4);
    if (version != 1 && version != 2) {
        throw ParseError(tag + ": unsupported version " + std::to_string(version) +
                         " at byte offset 4");
    }
    const std::size_t rows = detail::get_u32(bytes.data() + 8);
    const std::size_t cols = detail::get_u32(bytes.data() + 12);
    const std::size_t elem = version == 1 ? 4 : 8;
    const std::size_t expected = kCembHeaderBytes + elem * rows * cols;
    if (bytes.size() != expected) {
        throw ParseError(tag + ": payload size mismatch, expected " + std::to_string(expected) +
                         " bytes, got " + std::to_string(bytes.size()) + " (payload starts at byte offset 16)");
    }
    Matrix m(rows, cols);
    const unsigned char* p = bytes.data() + kCembHeaderBytes;
    for (std::size_t i = 0; i < rows * cols; ++i, p += elem) {
        const double v = version == 1 ? static_cast<double>(std::bit_cast<float>(detail::get_u32(p)))
                                      : std::bit_cast<double>(detail::get_u64(p));
        if (!std::isfinite(v)) {
            throw ParseError(tag + ": non-finite value at byte offset " +
                             std::to_string(kCembHeaderBytes + i * elem));
        }
        m.data()[i] = v;
    }
    return m;
}

inline void write_embeddings(const std::filesystem::path& path, const Matrix& m,
                             CembPrecision precision = CembPrecision::Float32) {
    const auto bytes = encode_cemb(m, precision);
    detail::write_file_bytes(path, bytes.data(), bytes.size());
}

inline Matrix read_embeddings(const std::filesystem::path& path) {
    return decode_cemb(detail::read_file_bytes(path), path.string());
}

}  // namespace conceptcil
