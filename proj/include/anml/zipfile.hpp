#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "anml/common.hpp"

namespace anml {

// Minimal ZIP support: enough to unpack the Omniglot archives (stored and
// deflate entries) and to build small fixture archives in tests.

namespace zipdetail {

inline uint16_t rd16(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
inline uint32_t rd32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline void wr16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline void wr32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::vector<unsigned char> inflate_raw(const unsigned char* data, size_t comp_size,
                                              size_t uncomp_size, const std::string& name) {
    std::vector<unsigned char> out(uncomp_size);
    z_stream zs{};
    if (inflateInit2(&zs, -15) != Z_OK) throw DataError("zlib init failed for " + name);
    zs.next_in = const_cast<unsigned char*>(data);
    zs.avail_in = static_cast<uInt>(comp_size);
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(uncomp_size);
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || zs.total_out != uncomp_size)
        throw DataError("corrupt deflate stream in zip entry '" + name + "'");
    return out;
}

}  // namespace zipdetail

struct ZipEntry {
    std::string name;
    std::vector<unsigned char> data;
};

// Parses a zip archive held in memory and returns the decompressed entries
// (directories skipped).
inline std::vector<ZipEntry> read_zip(const std::vector<unsigned char>& buf,
                                      const std::string& archive_name = "<memory>") {
    using namespace zipdetail;
    if (buf.size() < 22) throw DataError("zip too small: " + archive_name);
    // Locate the end-of-central-directory record (scan back past any comment).
    size_t eocd = std::string::npos;
    const size_t scan_limit = buf.size() >= 22 + 65536 ? buf.size() - 22 - 65536 : 0;
    for (size_t i = buf.size() - 22; ; --i) {
        if (rd32(buf.data() + i) == 0x06054b50) {
            eocd = i;
            break;
        }
        if (i == scan_limit) break;
    }
    if (eocd == std::string::npos)
        throw DataError("zip end-of-central-directory not found: " + archive_name);
    const uint16_t n_entries = rd16(buf.data() + eocd + 10);
    const uint32_t cd_offset = rd32(buf.data() + eocd + 16);

    std::vector<ZipEntry> entries;
    size_t pos = cd_offset;
    for (uint16_t e = 0; e < n_entries; ++e) {
        if (pos + 46 > buf.size() || rd32(buf.data() + pos) != 0x02014b50)
            throw DataError("corrupt zip central directory: " + archive_name);
        const uint16_t method = rd16(buf.data() + pos + 10);
        const uint32_t comp_size = rd32(buf.data() + pos + 20);
        const uint32_t uncomp_size = rd32(buf.data() + pos + 24);
        const uint16_t name_len = rd16(buf.data() + pos + 28);
        const uint16_t extra_len = rd16(buf.data() + pos + 30);
        const uint16_t comment_len = rd16(buf.data() + pos + 32);
        const uint32_t local_offset = rd32(buf.data() + pos + 42);
        std::string name(reinterpret_cast<const char*>(buf.data() + pos + 46), name_len);
        pos += 46u + name_len + extra_len + comment_len;

        if (!name.empty() && name.back() == '/') continue;  // directory entry

        if (local_offset + 30 > buf.size() || rd32(buf.data() + local_offset) != 0x04034b50)
            throw DataError("corrupt zip local header for '" + name + "': " + archive_name);
        const uint16_t lname = rd16(buf.data() + local_offset + 26);
        const uint16_t lextra = rd16(buf.data() + local_offset + 28);
        const size_t data_start = local_offset + 30u + lname + lextra;
        if (data_start + comp_size > buf.size())
            throw DataError("zip entry '" + name + "' extends past archive end: " + archive_name);

        ZipEntry entry;
        entry.name = name;
        if (method == 0) {
            entry.data.assign(buf.begin() + static_cast<long>(data_start),
                              buf.begin() + static_cast<long>(data_start + comp_size));
        } else if (method == 8) {
            entry.data = inflate_raw(buf.data() + data_start, comp_size, uncomp_size, name);
        } else {
            throw DataError("unsupported zip method " + std::to_string(method) + " for '" + name +
                            "'");
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

// Extracts an archive to dest, optionally stripping the first path component
// (the Omniglot archives wrap everything in images_background/ etc.).
inline size_t extract_zip(const std::filesystem::path& zip_path,
                          const std::filesystem::path& dest, bool strip_first_component) {
    std::ifstream f(zip_path, std::ios::binary);
    if (!f) throw DataError("cannot open archive " + zip_path.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    auto entries = read_zip(buf, zip_path.string());
    size_t written = 0;
    for (auto& e : entries) {
        std::string rel = e.name;
        if (strip_first_component) {
            auto slash = rel.find('/');
            if (slash == std::string::npos) continue;
            rel = rel.substr(slash + 1);
            if (rel.empty()) continue;
        }
        if (rel.find("..") != std::string::npos)
            throw DataError("refusing zip entry with parent path: '" + e.name + "'");
        const std::filesystem::path out_path = dest / rel;
        std::filesystem::create_directories(out_path.parent_path());
        std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + out_path.string());
        out.write(reinterpret_cast<const char*>(e.data.data()),
                  static_cast<std::streamsize>(e.data.size()));
        ++written;
    }
    return written;
}

// Store-only zip writer, used for fixtures and round-trip tests.
inline void write_zip_stored(const std::filesystem::path& zip_path,
                             const std::vector<ZipEntry>& entries) {
    using namespace zipdetail;
    std::string out;
    std::string central;
    for (const auto& e : entries) {
        const uint32_t offset = static_cast<uint32_t>(out.size());
        const uint32_t crc = static_cast<uint32_t>(
            crc32(0L, e.data.empty() ? Z_NULL : e.data.data(), static_cast<uInt>(e.data.size())));
        const uint32_t size = static_cast<uint32_t>(e.data.size());
        // local header
        wr32(out, 0x04034b50);
        wr16(out, 20);  // version needed
        wr16(out, 0);   // flags
        wr16(out, 0);   // method: stored
        wr16(out, 0);   // time
        wr16(out, 0);   // date
        wr32(out, crc);
        wr32(out, size);
        wr32(out, size);
        wr16(out, static_cast<uint16_t>(e.name.size()));
        wr16(out, 0);
        out += e.name;
        out.append(reinterpret_cast<const char*>(e.data.data()), e.data.size());
        // central directory record
        wr32(central, 0x02014b50);
        wr16(central, 20);
        wr16(central, 20);
        wr16(central, 0);
        wr16(central, 0);
        wr16(central, 0);
        wr16(central, 0);
        wr32(central, crc);
        wr32(central, size);
        wr32(central, size);
        wr16(central, static_cast<uint16_t>(e.name.size()));
        wr16(central, 0);
        wr16(central, 0);
        wr16(central, 0);
        wr16(central, 0);
        wr32(central, 0);
        wr32(central, offset);
        central += e.name;
    }
    const uint32_t cd_offset = static_cast<uint32_t>(out.size());
    out += central;
    wr32(out, 0x06054b50);
    wr16(out, 0);
    wr16(out, 0);
    wr16(out, static_cast<uint16_t>(entries.size()));
    wr16(out, static_cast<uint16_t>(entries.size()));
    wr32(out, static_cast<uint32_t>(central.size()));
    wr32(out, cd_offset);
    wr16(out, 0);

    std::ofstream f(zip_path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + zip_path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace anml
