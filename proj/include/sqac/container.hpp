#pragma once

// Versioned binary container shared by the model (SQAC) and index (SQIX)
// artifacts:
//
//   magic[4] | version u16 | payload ... | crc32 u32
//
// All integers and floats are little-endian. The CRC covers every byte
// before it.

#include <sqac/error.hpp>

#include <boost/crc.hpp>

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sqac::container {

static_assert(std::endian::native == std::endian::little,
              "artifact encoding assumes a little-endian host");

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    boost::crc_32_type crc;
    crc.process_bytes(bytes.data(), bytes.size());
    return crc.checksum();
}

class Writer {
public:
    /// Bare buffer without a header (for nested blocks).
    Writer() = default;

    Writer(std::string_view magic, std::uint16_t version) {
        buf_.insert(buf_.end(), magic.begin(), magic.end());
        put_u16(version);
    }

    void put_u8(std::uint8_t v) { buf_.push_back(v); }
    void put_u16(std::uint16_t v) { put_raw(v); }
    void put_u32(std::uint32_t v) { put_raw(v); }
    void put_u64(std::uint64_t v) { put_raw(v); }
    void put_f32(float v) { put_raw(v); }
    void put_f64(double v) { put_raw(v); }

    void put_string(std::string_view s) {
        put_u32(static_cast<std::uint32_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }

    void put_bytes(std::span<const std::uint8_t> bytes) {
        buf_.insert(buf_.end(), bytes.begin(), bytes.end());
    }

    std::size_t size() const { return buf_.size(); }

    std::vector<std::uint8_t> bytes() && { return std::move(buf_); }

    /// Appends the CRC trailer and returns the finished container.
    std::vector<std::uint8_t> finish() && {
        put_u32(crc32(buf_));
        return std::move(buf_);
    }

private:
    template <typename T>
    void put_raw(T v) {
        std::array<std::uint8_t, sizeof(T)> raw{};
        std::memcpy(raw.data(), &v, sizeof(T));
        buf_.insert(buf_.end(), raw.begin(), raw.end());
    }

    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    /// Validates magic, version and CRC; positions the cursor after the
    /// version field.
    Reader(std::span<const std::uint8_t> bytes, std::string_view magic,
           std::uint16_t supported_version)
        : bytes_(bytes) {
        const std::size_t header = magic.size() + 2;
        if (bytes.size() < header + 4) throw CorruptArtifact("artifact truncated: too short");
        if (std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
            throw CorruptArtifact("bad magic: expected '" + std::string(magic) + "'");
        }
        pos_ = magic.size();
        version_ = get_u16();
        if (version_ != supported_version) {
            throw VersionMismatch("unsupported " + std::string(magic) + " format version " +
                                  std::to_string(version_) + " (this build reads version " +
                                  std::to_string(supported_version) + ")");
        }
        const auto body = bytes.first(bytes.size() - 4);
        std::uint32_t stored = 0;
        std::memcpy(&stored, bytes.data() + body.size(), 4);
        if (crc32(body) != stored) throw CorruptArtifact("artifact checksum mismatch (truncated or corrupted)");
        end_ = body.size();
    }

    std::uint16_t version() const { return version_; }

    std::uint8_t get_u8() { return get_raw<std::uint8_t>(); }
    std::uint16_t get_u16() { return get_raw<std::uint16_t>(); }
    std::uint32_t get_u32() { return get_raw<std::uint32_t>(); }
    std::uint64_t get_u64() { return get_raw<std::uint64_t>(); }
    float get_f32() { return get_raw<float>(); }
    double get_f64() { return get_raw<double>(); }

    std::string get_string() {
        const auto n = get_u32();
        require(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return end_ - pos_; }

    void expect_end() const {
        if (pos_ != end_) throw CorruptArtifact("trailing bytes in artifact payload");
    }

private:
    void require(std::size_t n) const {
        if (n > end_ - pos_) throw CorruptArtifact("artifact payload truncated");
    }

    template <typename T>
    T get_raw() {
        require(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    std::size_t end_ = static_cast<std::size_t>(-1);
    std::uint16_t version_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for '" + path + "'");
}

/// Short hex fingerprint of an artifact's bytes.
inline std::string fingerprint(std::span<const std::uint8_t> bytes) {
    char hex[9];
    std::snprintf(hex, sizeof hex, "%08x", static_cast<unsigned>(crc32(bytes)));
    return hex;
}

}  // namespace sqac::container
