#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "rgt/model.hpp"
#include "rgt/tensor.hpp"

// Weight file layout, little-endian:
//   magic "RGTW" | u32 version=1 | u32 tensor count
//   per tensor: u16 path length | path bytes | u8 rank | u32 extents... | f32 payload
//   u32 CRC32 over everything before it
// Values are f64 internally, narrowed to f32 on save; a save/load/save
// round trip is bitwise stable.

namespace rgt {

namespace detail {

inline uint32_t crc32_update(uint32_t crc, const uint8_t* data, size_t len) {
    static const std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc = ~crc;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    return ~crc;
}

class CrcWriter {
public:
    explicit CrcWriter(std::ostream& os) : os_(os) {}

    void bytes(const void* p, size_t n) {
        os_.write(reinterpret_cast<const char*>(p), std::streamsize(n));
        crc_ = crc32_update(crc_, reinterpret_cast<const uint8_t*>(p), n);
    }
    void u8(uint8_t v) { bytes(&v, 1); }
    void u16(uint16_t v) {
        uint8_t b[2] = {uint8_t(v & 0xFF), uint8_t(v >> 8)};
        bytes(b, 2);
    }
    void u32(uint32_t v) {
        uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
        bytes(b, 4);
    }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    uint32_t crc() const { return crc_; }

private:
    std::ostream& os_;
    uint32_t crc_ = 0;
};

class CrcReader {
public:
    explicit CrcReader(std::istream& is) : is_(is) {}

    void bytes(void* p, size_t n) {
        is_.read(reinterpret_cast<char*>(p), std::streamsize(n));
        if (size_t(is_.gcount()) != n) throw IoError("weight stream truncated");
        crc_ = crc32_update(crc_, reinterpret_cast<const uint8_t*>(p), n);
    }
    uint8_t u8() {
        uint8_t v;
        bytes(&v, 1);
        return v;
    }
    uint16_t u16() {
        uint8_t b[2];
        bytes(b, 2);
        return uint16_t(b[0] | (b[1] << 8));
    }
    uint32_t u32() {
        uint8_t b[4];
        bytes(b, 4);
        return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
               (uint32_t(b[3]) << 24);
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    uint32_t crc() const { return crc_; }

private:
    std::istream& is_;
    uint32_t crc_ = 0;
};

} // namespace detail

inline void save_weights(const WeightStore& store, std::ostream& os) {
    detail::CrcWriter w(os);
    w.bytes("RGTW", 4);
    w.u32(1);
    w.u32(uint32_t(store.entries().size()));
    for (const auto& [path, t] : store.entries()) {
        if (path.size() > 0xFFFF) throw IoError("parameter path too long: " + path);
        w.u16(uint16_t(path.size()));
        w.bytes(path.data(), path.size());
        w.u8(uint8_t(t.rank()));
        for (int64_t d : t.shape()) w.u32(uint32_t(d));
        for (double v : t.data()) w.f32(float(v));
    }
    uint32_t crc = w.crc();
    // the trailing checksum is not part of its own coverage
    uint8_t b[4] = {uint8_t(crc), uint8_t(crc >> 8), uint8_t(crc >> 16), uint8_t(crc >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
    if (!os) throw IoError("weight stream write failed");
}

inline WeightStore load_weights(std::istream& is, bool trainable = false) {
    detail::CrcReader r(is);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, "RGTW", 4) != 0) throw IoError("bad magic, not an RGTW weight stream");
    uint32_t version = r.u32();
    if (version != 1) throw IoError("unsupported weight version " + std::to_string(version));
    uint32_t count = r.u32();
    WeightStore store;
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t len = r.u16();
        std::string path(len, '\0');
        r.bytes(path.data(), len);
        uint8_t rank = r.u8();
        Shape shape(rank);
        for (uint8_t d = 0; d < rank; ++d) shape[d] = int64_t(r.u32());
        int64_t n = shape_numel(shape);
        std::vector<double> data(static_cast<size_t>(n));
        for (int64_t k = 0; k < n; ++k) data[size_t(k)] = double(r.f32());
        store.put(std::move(path), trainable ? Tensor::param(shape, std::move(data))
                                             : Tensor::from_data(shape, std::move(data)));
    }
    uint32_t expected = r.crc();
    uint8_t b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4) throw IoError("weight stream truncated");
    uint32_t stored = uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
                      (uint32_t(b[3]) << 24);
    if (stored != expected) throw IoError("checksum mismatch in weight stream");
    return store;
}

inline void save_weights_file(const WeightStore& store, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    save_weights(store, os);
}

inline WeightStore load_weights_file(const std::string& path, bool trainable = false) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    return load_weights(is, trainable);
}

inline std::string save_weights_string(const WeightStore& store) {
    std::ostringstream os(std::ios::binary);
    save_weights(store, os);
    return os.str();
}

inline WeightStore load_weights_string(const std::string& bytes, bool trainable = false) {
    std::istringstream is(bytes, std::ios::binary);
    return load_weights(is, trainable);
}

} // namespace rgt
