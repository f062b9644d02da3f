#pragma once

// Binary container framing shared by checkpoint and index files:
//   magic[4] | u32 version | u64 json length | json metadata | payload blob
// Integers and floats are little-endian; tensor payloads are float32.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace cpte {

static_assert(std::endian::native == std::endian::little, "container format assumes a little-endian host");

class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failure on '" + path + "'");
    return data;
}

// Write via a temp file in the same directory, then rename into place.
inline void atomic_write_file(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failure on '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

namespace detail {

inline void append_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

inline void append_u64(std::string& out, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

}  // namespace detail

struct Container {
    std::uint32_t version = 0;
    nlohmann::json meta;
    std::string payload;
};

inline std::string serialize_container(const char magic[4], std::uint32_t version, const nlohmann::json& meta,
                                       const std::string& payload) {
    std::string out;
    const std::string meta_str = meta.dump();
    out.reserve(16 + meta_str.size() + payload.size());
    out.append(magic, 4);
    detail::append_u32(out, version);
    detail::append_u64(out, static_cast<std::uint64_t>(meta_str.size()));
    out += meta_str;
    out += payload;
    return out;
}

inline Container parse_container(const std::string& bytes, const char magic[4], std::uint32_t expected_version) {
    if (bytes.size() < 16) throw FormatError("container truncated: header incomplete");
    if (std::memcmp(bytes.data(), magic, 4) != 0) {
        throw FormatError(std::string("bad magic: expected '") + std::string(magic, 4) + "'");
    }
    Container c;
    std::memcpy(&c.version, bytes.data() + 4, 4);
    if (c.version != expected_version) {
        throw FormatError("unsupported format version " + std::to_string(c.version) + " (expected " +
                          std::to_string(expected_version) + ")");
    }
    std::uint64_t meta_len = 0;
    std::memcpy(&meta_len, bytes.data() + 8, 8);
    if (16 + meta_len > bytes.size()) throw FormatError("container truncated: metadata extends past end of file");
    try {
        c.meta = nlohmann::json::parse(bytes.substr(16, meta_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("corrupt metadata json: ") + e.what());
    }
    c.payload = bytes.substr(16 + meta_len);
    return c;
}

// ---------------------------------------------------------------------------
// payload helpers
// ---------------------------------------------------------------------------

inline void append_f32(std::string& blob, const std::vector<double>& values) {
    const std::size_t start = blob.size();
    blob.resize(start + values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const float f = static_cast<float>(values[i]);
        std::memcpy(blob.data() + start + i * 4, &f, 4);
    }
}

inline std::vector<double> read_f32(const std::string& blob, std::size_t byte_offset, std::size_t count) {
    if (byte_offset + count * 4 > blob.size()) {
        throw FormatError("payload truncated: float32 section extends past end of blob");
    }
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        float f;
        std::memcpy(&f, blob.data() + byte_offset + i * 4, 4);
        out[i] = static_cast<double>(f);
    }
    return out;
}

inline void append_u32_array(std::string& blob, const std::vector<std::uint32_t>& values) {
    const std::size_t start = blob.size();
    blob.resize(start + values.size() * 4);
    std::memcpy(blob.data() + start, values.data(), values.size() * 4);
}

inline std::vector<std::uint32_t> read_u32_array(const std::string& blob, std::size_t byte_offset, std::size_t count) {
    if (byte_offset + count * 4 > blob.size()) {
        throw FormatError("payload truncated: u32 section extends past end of blob");
    }
    std::vector<std::uint32_t> out(count);
    std::memcpy(out.data(), blob.data() + byte_offset, count * 4);
    return out;
}

// Snap each value onto the float32 grid (what a save/load round trip does).
inline void round_to_f32(std::vector<double>& values) {
    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace cpte
