#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparsep/grid.hpp"

namespace sparsep {

using json = nlohmann::ordered_json;

namespace detail {

inline constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const std::uint8_t* data, std::size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        std::uint32_t v = data[i] << 16;
        if (i + 1 < len) v |= data[i + 1] << 8;
        if (i + 2 < len) v |= data[i + 2];
        out += kB64Alphabet[(v >> 18) & 63];
        out += kB64Alphabet[(v >> 12) & 63];
        out += (i + 1 < len) ? kB64Alphabet[(v >> 6) & 63] : '=';
        out += (i + 2 < len) ? kB64Alphabet[v & 63] : '=';
    }
    return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& s) {
    auto value = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::vector<std::uint8_t> out;
    out.reserve(s.size() / 4 * 3);
    std::uint32_t acc = 0;
    int bits = 0;
    for (char c : s) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        int v = value(c);
        if (v < 0) throw ParameterError("base64: invalid character");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
        }
    }
    return out;
}

inline std::string encode_doubles(const std::vector<double>& v) {
    // little-endian 64-bit floats
    std::vector<std::uint8_t> bytes(v.size() * 8);
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &v[i], 8);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
    }
    return base64_encode(bytes.data(), bytes.size());
}

inline std::vector<double> decode_doubles(const std::string& s) {
    auto bytes = base64_decode(s);
    if (bytes.size() % 8 != 0) throw ParameterError("payload length is not a multiple of 8");
    std::vector<double> v(bytes.size() / 8);
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
        std::memcpy(&v[i], &bits, 8);
    }
    return v;
}

}  // namespace detail

/// Self-describing record: JSON header plus base64 little-endian f64 payload.
/// Round-trips exactly (bit-level).
inline json gridfunction_to_json(const GridFunction& f) {
    json j;
    j["n"] = f.dim();
    j["L"] = f.level();
    json center = json::array();
    for (int a = 0; a < f.dim(); ++a) center.push_back(f.root().center[a]);
    j["root_center"] = center;
    j["root_half_side"] = f.root().half_side;
    j["samples"] = detail::encode_doubles(f.samples());
    return j;
}

inline GridFunction gridfunction_from_json(const json& j) {
    int n = j.at("n").get<int>();
    int level = j.at("L").get<int>();
    Point c{0, 0, 0};
    const auto& cc = j.at("root_center");
    for (int a = 0; a < n; ++a) c[a] = cc.at(a).get<double>();
    Cube root(n, c, j.at("root_half_side").get<double>());
    return GridFunction(root, level, detail::decode_doubles(j.at("samples").get<std::string>()));
}

/// Run-length encoding of a cell mask as [start, length, start, length, ...].
inline json mask_to_json(const CellMask& m) {
    json runs = json::array();
    std::int64_t c = m.cell_count();
    std::int64_t i = 0;
    while (i < c) {
        if (!m.test(i)) {
            ++i;
            continue;
        }
        std::int64_t start = i;
        while (i < c && m.test(i)) ++i;
        runs.push_back(start);
        runs.push_back(i - start);
    }
    return runs;
}

inline CellMask mask_from_json(const Cube& root, int level, const json& runs) {
    CellMask m(root, level);
    for (std::size_t k = 0; k + 1 < runs.size(); k += 2) {
        std::int64_t start = runs.at(k).get<std::int64_t>();
        std::int64_t len = runs.at(k + 1).get<std::int64_t>();
        for (std::int64_t i = start; i < start + len; ++i) m.set(i);
    }
    return m;
}

}  // namespace sparsep
