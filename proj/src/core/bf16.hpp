#pragma once

#include <cstdint>

#include "error.hpp"

namespace fe2e {

// One bfloat16 encoding: 1 sign bit, 8 exponent bits (bias 127), 7 fraction
// bits. Only zero and normalized values are modeled; subnormal and
// non-finite encodings are rejected at the conversion boundary.
struct Bf16 {
    std::uint16_t bits = 0;

    static Bf16 from_bits(std::uint16_t raw) { return Bf16{raw}; }

    unsigned sign_bit() const { return (bits >> 15) & 0x1u; }
    unsigned exponent() const { return (bits >> 7) & 0xFFu; }
    unsigned fraction() const { return bits & 0x7Fu; }

    bool is_zero() const { return (bits & 0x7FFFu) == 0; }
    bool is_normalized() const { return exponent() >= 1 && exponent() <= 254; }

    // (-1)^S * 2^(E-127) * (1.F)_2, exact in double.
    double to_double() const;

    bool operator==(const Bf16& o) const { return bits == o.bits; }
};

// Nearest BF16 value under round-to-nearest, ties-to-even on the 7-bit
// mantissa boundary. Throws Numeric for non-finite input and for inputs whose
// rounded magnitude falls outside the normalized range (zero is accepted).
Bf16 round_to_bf16(double x);

// BF16 grid spacing 2^(e-7) in the binade containing x (e = floor(log2 |x|)).
// Zero, subnormal-range and non-finite inputs are outside the operating range.
double ulp_at(double x);

// |x - decode(round_to_bf16(x))| for |x| <= 1.
double measured_roundtrip_error(double x);

// Worst-case quantization-step model over the normalized [-1,1] range.
struct StepModel {
    double delta_v = 1.0 / 256.0;

    explicit StepModel(double dv = 1.0 / 256.0) : delta_v(dv) {
        if (!(delta_v > 0.0) || delta_v > 0x1.0p-7) {
            throw_numeric("step model requires 0 < delta_v <= 2^-7");
        }
    }
};

}  // namespace fe2e
