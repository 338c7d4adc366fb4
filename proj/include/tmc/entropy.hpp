#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tmc {

using Bytes = std::vector<std::uint8_t>;

// Little-endian writer with zigzag/varint helpers.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void f32(float v);
    void f64(double v);
    void varint(std::uint64_t v);
    void svarint(std::int64_t v);
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

    const Bytes& data() const noexcept { return buf_; }
    Bytes take() { return std::move(buf_); }
    std::size_t size() const noexcept { return buf_.size(); }

private:
    Bytes buf_;
};

// Bounds-checked reader; every short read throws FormatError naming `what`.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8(const char* what = "byte");
    std::uint16_t u16(const char* what = "u16");
    std::uint32_t u32(const char* what = "u32");
    float f32(const char* what = "f32");
    double f64(const char* what = "f64");
    std::uint64_t varint(const char* what = "varint");
    std::int64_t svarint(const char* what = "varint");
    std::span<const std::uint8_t> bytes(std::size_t n, const char* what = "payload");

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    std::size_t position() const noexcept { return pos_; }
    bool done() const noexcept { return pos_ == data_.size(); }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

constexpr std::uint64_t zigzag(std::int64_t v) {
    return (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
}
constexpr std::int64_t unzigzag(std::uint64_t v) {
    return static_cast<std::int64_t>(v >> 1) ^ -static_cast<std::int64_t>(v & 1);
}

enum class EntropyTag : std::uint8_t {
    Stored = 0,  // identity
    Range = 1,   // order-0 adaptive range coder, varint length prefix
};

EntropyTag parse_entropy_tag(std::uint8_t raw);
std::string to_string(EntropyTag tag);

Bytes entropy_encode(std::span<const std::uint8_t> input, EntropyTag tag);
Bytes entropy_decode(std::span<const std::uint8_t> input, EntropyTag tag);

enum class Direction { Encode, Decode };
// Dispatch on a raw tag byte, as read from a stream header.
Bytes entropy_stage(std::span<const std::uint8_t> input, std::uint8_t tag, Direction direction);

// Adaptive frequency model used by the range coder: counts start at 1, grow by
// kIncrement per occurrence and are halved (rounding up) once the total reaches kLimit.
class AdaptiveByteModel {
public:
    static constexpr std::uint32_t kSymbols = 256;
    static constexpr std::uint32_t kIncrement = 32;
    static constexpr std::uint32_t kLimit = 1u << 16;

    AdaptiveByteModel();

    std::uint32_t total() const noexcept { return total_; }
    std::uint32_t freq(std::uint8_t s) const noexcept { return counts_[s]; }
    std::uint32_t cumulative(std::uint8_t s) const noexcept;  // sum of counts below s
    // Symbol whose cumulative interval contains `target` (< total).
    std::uint8_t find(std::uint32_t target) const noexcept;
    void update(std::uint8_t s);

private:
    void rebuild();

    std::uint32_t counts_[kSymbols];
    std::uint32_t tree_[kSymbols + 1];  // Fenwick tree over counts
    std::uint32_t total_ = 0;
};

}  // namespace tmc
