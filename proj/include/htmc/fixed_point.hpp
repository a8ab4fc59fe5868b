#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace htmc {

/// Sign-magnitude fractional fixed point. A word is [sign?] b_1 .. b_M with
/// value (-1)^sign * sum 2^{-m} b_m, so magnitudes live in [0, 1 - 2^-M].
struct FixedPointFormat {
    bool is_signed = false;
    int frac_bits = 8;

    int width() const { return frac_bits + (is_signed ? 1 : 0); }

    double resolution() const { return std::ldexp(1.0, -frac_bits); }

    double max_value() const { return 1.0 - resolution(); }
    double min_value() const { return is_signed ? -max_value() : 0.0; }

    bool representable(double v) const {
        if (v < min_value() - 1e-15 || v > max_value() + 1e-15) return false;
        double scaled = v * std::ldexp(1.0, frac_bits);
        return std::abs(scaled - std::round(scaled)) < 1e-9;
    }

    /// Bit layout: sign first (when signed), then b_1 (weight 1/2) .. b_M.
    double decode(const std::vector<bool>& bits, size_t offset = 0) const {
        if (bits.size() < offset + width()) throw std::invalid_argument("decode: word out of range");
        size_t pos = offset;
        bool neg = false;
        if (is_signed) neg = bits[pos++];
        double v = 0.0;
        for (int m = 1; m <= frac_bits; ++m)
            if (bits[pos++]) v += std::ldexp(1.0, -m);
        return neg ? -v : v;
    }

    /// Nearest representable value; clamps to the representable range.
    std::vector<bool> encode(double v) const {
        std::vector<bool> bits(width(), false);
        size_t pos = 0;
        bool neg = v < 0.0;
        if (is_signed)
            bits[pos++] = neg;
        else if (neg)
            v = 0.0;
        double mag = std::min(std::abs(v), max_value());
        long q = std::lround(mag * std::ldexp(1.0, frac_bits));
        if (q > (1L << frac_bits) - 1) q = (1L << frac_bits) - 1;
        for (int m = 1; m <= frac_bits; ++m) bits[pos++] = (q >> (frac_bits - m)) & 1;
        return bits;
    }

    double quantize(double v) const { return decode(encode(v)); }

    bool operator==(const FixedPointFormat& o) const {
        return is_signed == o.is_signed && frac_bits == o.frac_bits;
    }
};

inline nlohmann::ordered_json format_to_json(const FixedPointFormat& f) {
    return {{"signed", f.is_signed}, {"frac_bits", f.frac_bits}};
}

inline FixedPointFormat format_from_json(const nlohmann::json& j) {
    FixedPointFormat f;
    f.is_signed = j.at("signed").get<bool>();
    f.frac_bits = j.at("frac_bits").get<int>();
    if (f.frac_bits < 1) throw std::invalid_argument("frac_bits must be >= 1");
    return f;
}

/// Unsigned integer binary helpers (MSB first), used for grid coordinates.
inline std::vector<bool> to_bits_msb(uint64_t v, int width) {
    std::vector<bool> bits(width);
    for (int i = 0; i < width; ++i) bits[i] = (v >> (width - 1 - i)) & 1;
    return bits;
}

inline uint64_t from_bits_msb(const std::vector<bool>& bits, size_t offset, int width) {
    uint64_t v = 0;
    for (int i = 0; i < width; ++i) v = (v << 1) | uint64_t(bits[offset + i]);
    return v;
}

}  // namespace htmc
