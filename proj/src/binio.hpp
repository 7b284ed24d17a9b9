#pragma once

#include "aesq/errors.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

// Little-endian primitives shared by the dataset and checkpoint formats.

namespace aesq::binio {

inline void put_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f32(std::ostream& os, double v) {
    float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(os, bits);
}

inline void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(os, bits);
}

class Reader {
public:
    explicit Reader(const std::string& path) : is_(path, std::ios::binary), path_(path) {
        if (!is_) throw FormatError("cannot open " + path, 0);
    }

    std::size_t offset() const { return offset_; }
    const std::string& path() const { return path_; }

    void bytes(char* dst, std::size_t n) {
        is_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n)
            throw FormatError("truncated file " + path_, offset_);
        offset_ += n;
    }

    std::uint16_t u16() {
        unsigned char b[2];
        bytes(reinterpret_cast<char*>(b), 2);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }

    std::uint32_t u32() {
        unsigned char b[4];
        bytes(reinterpret_cast<char*>(b), 4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }

    std::uint64_t u64() {
        unsigned char b[8];
        bytes(reinterpret_cast<char*>(b), 8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }

    double f32() {
        std::uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return static_cast<double>(f);
    }

    double f64() {
        std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }

    std::string string(std::size_t n) {
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }

    void expect_magic(const char* magic) {
        char buf[4];
        bytes(buf, 4);
        if (std::memcmp(buf, magic, 4) != 0)
            throw FormatError("bad magic in " + path_ + ", expected " + magic, 0);
    }

    bool at_eof() {
        is_.peek();
        return is_.eof();
    }

private:
    std::ifstream is_;
    std::string path_;
    std::size_t offset_ = 0;
};

}  // namespace aesq::binio
