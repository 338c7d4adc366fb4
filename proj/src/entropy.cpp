#include "tmc/entropy.hpp"

#include <bit>
#include <cstring>

#include "tmc/errors.hpp"

namespace tmc {

void ByteWriter::u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(bits >> (8 * i)));
}

void ByteWriter::varint(std::uint64_t v) {
    while (v >= 0x80) {
        u8(static_cast<std::uint8_t>(v | 0x80));
        v >>= 7;
    }
    u8(static_cast<std::uint8_t>(v));
}

void ByteWriter::svarint(std::int64_t v) { varint(zigzag(v)); }

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n, const char* what) {
    if (n > remaining()) throw FormatError(std::string("truncated payload: ") + what);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
}

std::uint8_t ByteReader::u8(const char* what) { return bytes(1, what)[0]; }

std::uint16_t ByteReader::u16(const char* what) {
    auto b = bytes(2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t ByteReader::u32(const char* what) {
    auto b = bytes(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
}

float ByteReader::f32(const char* what) { return std::bit_cast<float>(u32(what)); }

double ByteReader::f64(const char* what) {
    auto b = bytes(8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return std::bit_cast<double>(v);
}

std::uint64_t ByteReader::varint(const char* what) {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
        const std::uint8_t b = u8(what);
        v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
        if (!(b & 0x80)) return v;
    }
    throw FormatError(std::string("varint too long: ") + what);
}

std::int64_t ByteReader::svarint(const char* what) { return unzigzag(varint(what)); }

// --- adaptive model ----------------------------------------------------------

AdaptiveByteModel::AdaptiveByteModel() {
    for (auto& c : counts_) c = 1;
    rebuild();
}

void AdaptiveByteModel::rebuild() {
    total_ = 0;
    for (std::uint32_t i = 0; i <= kSymbols; ++i) tree_[i] = 0;
    for (std::uint32_t s = 0; s < kSymbols; ++s) {
        total_ += counts_[s];
        for (std::uint32_t i = s + 1; i <= kSymbols; i += i & (0u - i)) tree_[i] += counts_[s];
    }
}

std::uint32_t AdaptiveByteModel::cumulative(std::uint8_t s) const noexcept {
    std::uint32_t sum = 0;
    for (std::uint32_t i = s; i > 0; i -= i & (0u - i)) sum += tree_[i];
    return sum;
}

std::uint8_t AdaptiveByteModel::find(std::uint32_t target) const noexcept {
    std::uint32_t pos = 0;
    for (std::uint32_t step = kSymbols; step > 0; step >>= 1) {
        const std::uint32_t next = pos + step;
        if (next <= kSymbols && tree_[next] <= target) {
            pos = next;
            target -= tree_[next];
        }
    }
    return static_cast<std::uint8_t>(pos);
}

void AdaptiveByteModel::update(std::uint8_t s) {
    counts_[s] += kIncrement;
    total_ += kIncrement;
    if (total_ >= kLimit) {
        for (auto& c : counts_) c = (c + 1) / 2;
        rebuild();
        return;
    }
    for (std::uint32_t i = s + 1u; i <= kSymbols; i += i & (0u - i)) tree_[i] += kIncrement;
}

// --- range coder ---------------------------------------------------------------

namespace {

constexpr std::uint32_t kTop = 1u << 24;

// 32-bit range coder with a 64-bit low register; carries propagate through a
// pending 0xFF run (the first emitted byte is always zero).
class RangeEncoder {
public:
    explicit RangeEncoder(Bytes& out) : out_(out) {}

    void encode(std::uint32_t cum, std::uint32_t freq, std::uint32_t total) {
        const std::uint32_t r = range_ / total;
        low_ += static_cast<std::uint64_t>(r) * cum;
        range_ = r * freq;
        while (range_ < kTop) {
            range_ <<= 8;
            shift_low();
        }
    }

    void finish() {
        for (int i = 0; i < 5; ++i) shift_low();
    }

private:
    void shift_low() {
        if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
            const auto carry = static_cast<std::uint8_t>(low_ >> 32);
            std::uint8_t temp = cache_;
            do {
                out_.push_back(static_cast<std::uint8_t>(temp + carry));
                temp = 0xFF;
            } while (--pending_ != 0);
            cache_ = static_cast<std::uint8_t>(low_ >> 24);
        }
        ++pending_;
        low_ = (low_ & 0x00FFFFFFu) << 8;
    }

    Bytes& out_;
    std::uint64_t low_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint8_t cache_ = 0;
    std::uint64_t pending_ = 1;
};

class RangeDecoder {
public:
    explicit RangeDecoder(std::span<const std::uint8_t> in) : in_(in) {
        for (int i = 0; i < 5; ++i) code_ = (code_ << 8) | next();
    }

    std::uint32_t target(std::uint32_t total) {
        step_ = range_ / total;
        const std::uint32_t v = code_ / step_;
        if (v >= total) throw FormatError("range coder stream is corrupt");
        return v;
    }

    void consume(std::uint32_t cum, std::uint32_t freq) {
        code_ -= step_ * cum;
        range_ = step_ * freq;
        while (range_ < kTop) {
            code_ = (code_ << 8) | next();
            range_ <<= 8;
        }
    }

private:
    std::uint32_t next() { return pos_ < in_.size() ? in_[pos_++] : 0u; }

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
    std::uint32_t code_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint32_t step_ = 1;
};

Bytes range_encode(std::span<const std::uint8_t> input) {
    ByteWriter header;
    header.varint(input.size());
    Bytes out = header.take();
    if (input.empty()) return out;
    AdaptiveByteModel model;
    RangeEncoder enc(out);
    for (std::uint8_t s : input) {
        enc.encode(model.cumulative(s), model.freq(s), model.total());
        model.update(s);
    }
    enc.finish();
    return out;
}

Bytes range_decode(std::span<const std::uint8_t> input) {
    ByteReader reader(input);
    const std::uint64_t n = reader.varint("entropy length marker");
    Bytes out;
    if (n == 0) return out;
    if (reader.remaining() == 0) throw FormatError("truncated payload: range coded data");
    // Corrupt length markers would otherwise trigger a huge reserve.
    if (n > (reader.remaining() + 8) * 65536ull) throw FormatError("entropy length marker exceeds payload");
    out.reserve(static_cast<std::size_t>(n));
    AdaptiveByteModel model;
    RangeDecoder dec(input.subspan(reader.position()));
    for (std::uint64_t i = 0; i < n; ++i) {
        const std::uint8_t s = model.find(dec.target(model.total()));
        dec.consume(model.cumulative(s), model.freq(s));
        model.update(s);
        out.push_back(s);
    }
    return out;
}

}  // namespace

EntropyTag parse_entropy_tag(std::uint8_t raw) {
    if (raw > 1) throw FormatError("unknown entropy tag " + std::to_string(raw));
    return static_cast<EntropyTag>(raw);
}

std::string to_string(EntropyTag tag) { return tag == EntropyTag::Stored ? "stored" : "range"; }

Bytes entropy_encode(std::span<const std::uint8_t> input, EntropyTag tag) {
    switch (tag) {
        case EntropyTag::Stored: return Bytes(input.begin(), input.end());
        case EntropyTag::Range: return range_encode(input);
    }
    throw FormatError("unknown entropy tag");
}

Bytes entropy_decode(std::span<const std::uint8_t> input, EntropyTag tag) {
    switch (tag) {
        case EntropyTag::Stored: return Bytes(input.begin(), input.end());
        case EntropyTag::Range: return range_decode(input);
    }
    throw FormatError("unknown entropy tag");
}

Bytes entropy_stage(std::span<const std::uint8_t> input, std::uint8_t tag, Direction direction) {
    const EntropyTag t = parse_entropy_tag(tag);
    return direction == Direction::Encode ? entropy_encode(input, t) : entropy_decode(input, t);
}

}  // namespace tmc
