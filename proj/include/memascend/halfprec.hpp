// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>

namespace memascend {

// Round-to-nearest-even conversions between fp32 and the two 16-bit formats
// the offload path stores. Bit-exact and branch-light; shared by the training
// pipeline and its oracles so both sides round identically.

inline std::uint32_t float_bits(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, sizeof u);
    return u;
}

inline float bits_float(std::uint32_t u) {
    float f;
    std::memcpy(&f, &u, sizeof f);
    return f;
}

inline std::uint16_t bf16_from_float(float f) {
    std::uint32_t u = float_bits(f);
    if ((u & 0x7FFFFFFFu) > 0x7F800000u) {
        return static_cast<std::uint16_t>((u >> 16) | 0x0040u);  // quiet the NaN
    }
    u += 0x7FFFu + ((u >> 16) & 1u);
    return static_cast<std::uint16_t>(u >> 16);
}

inline float bf16_to_float(std::uint16_t h) {
    return bits_float(static_cast<std::uint32_t>(h) << 16);
}

inline std::uint16_t fp16_from_float(float f) {
    const std::uint32_t u = float_bits(f);
    const std::uint32_t sign = (u >> 16) & 0x8000u;
    const std::uint32_t abs = u & 0x7FFFFFFFu;

    if (abs >= 0x7F800000u) {  // inf / NaN
        const std::uint32_t mant = abs > 0x7F800000u ? 0x0200u : 0u;
        return static_cast<std::uint16_t>(sign | 0x7C00u | mant);
    }
    if (abs >= 0x477FF000u) {  // overflows half range -> inf
        return static_cast<std::uint16_t>(sign | 0x7C00u);
    }
    if (abs < 0x38800000u) {  // subnormal half (or zero)
        if (abs < 0x33000000u) {
            return static_cast<std::uint16_t>(sign);  // rounds to +/-0
        }
        // Half subnormals step in 2^-24; shift the implicit-bit mantissa so
        // one ulp of the result is one unit, then round to nearest even.
        const std::uint32_t shift = 126u - (abs >> 23);  // 14..24
        std::uint32_t mant = (abs & 0x007FFFFFu) | 0x00800000u;
        const std::uint32_t lost = mant & ((1u << shift) - 1u);
        mant >>= shift;
        const std::uint32_t halfway = 1u << (shift - 1u);
        if (lost > halfway || (lost == halfway && (mant & 1u))) {
            ++mant;
        }
        return static_cast<std::uint16_t>(sign | mant);
    }
    // Normal range: rebias exponent, round mantissa to 10 bits.
    std::uint32_t val = abs + 0xC8000000u;  // exponent rebias (127 -> 15) << 23
    const std::uint32_t lost = val & 0x1FFFu;
    val >>= 13;
    if (lost > 0x1000u || (lost == 0x1000u && (val & 1u))) {
        ++val;
    }
    return static_cast<std::uint16_t>(sign | val);
}

inline float fp16_to_float(std::uint16_t h) {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    const std::uint32_t exp = (h >> 10) & 0x1Fu;
    const std::uint32_t mant = h & 0x3FFu;

    if (exp == 0x1Fu) {
        return bits_float(sign | 0x7F800000u | (mant << 13));
    }
    if (exp == 0) {
        if (mant == 0) {
            return bits_float(sign);
        }
        // Normalize the subnormal.
        std::uint32_t m = mant;
        std::uint32_t e = 127 - 15 + 1;
        while ((m & 0x400u) == 0) {
            m <<= 1;
            --e;
        }
        m &= 0x3FFu;
        return bits_float(sign | (e << 23) | (m << 13));
    }
    return bits_float(sign | ((exp + 127 - 15) << 23) | (mant << 13));
}

}  // namespace memascend
