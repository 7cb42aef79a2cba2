#include "bf16.hpp"

#include <bit>
#include <cmath>

namespace fe2e {

double Bf16::to_double() const {
    if (is_zero()) return sign_bit() ? -0.0 : 0.0;
    if (!is_normalized()) throw_numeric("bf16 decode outside normalized range");
    double mant = 1.0 + static_cast<double>(fraction()) / 128.0;
    double mag = std::ldexp(mant, static_cast<int>(exponent()) - 127);
    return sign_bit() ? -mag : mag;
}

Bf16 round_to_bf16(double x) {
    if (!std::isfinite(x)) throw_numeric("round_to_bf16 requires finite input");

    std::uint64_t raw = std::bit_cast<std::uint64_t>(x);
    std::uint16_t sign = static_cast<std::uint16_t>(raw >> 63);
    if (x == 0.0) return Bf16{static_cast<std::uint16_t>(sign << 15)};

    std::int64_t expo = static_cast<std::int64_t>((raw >> 52) & 0x7FFu);   // biased 1023
    std::uint64_t mant52 = raw & ((1ULL << 52) - 1);
    if (expo == 0) throw_numeric("round_to_bf16: subnormal input outside operating range");

    // Round the 52-bit mantissa to 7 bits, ties to even.
    std::uint64_t keep = mant52 >> 45;
    std::uint64_t rem = mant52 & ((1ULL << 45) - 1);
    constexpr std::uint64_t half = 1ULL << 44;
    if (rem > half || (rem == half && (keep & 1))) {
        ++keep;
        if (keep == 128) {  // mantissa overflow, bump the exponent
            keep = 0;
            ++expo;
        }
    }

    std::int64_t bf16_exp = expo - 1023 + 127;
    if (bf16_exp < 1) throw_numeric("round_to_bf16: result underflows normalized range");
    if (bf16_exp > 254) throw_numeric("round_to_bf16: result overflows normalized range");

    std::uint16_t bits = static_cast<std::uint16_t>(
        (sign << 15) | (static_cast<std::uint16_t>(bf16_exp) << 7) | static_cast<std::uint16_t>(keep));
    return Bf16{bits};
}

double ulp_at(double x) {
    if (!std::isfinite(x) || x == 0.0) throw_numeric("ulp_at requires finite nonzero input");
    int e = std::ilogb(x);
    if (e < -126 || e > 127) throw_numeric("ulp_at: input outside normalized bf16 range");
    return std::ldexp(1.0, e - 7);
}

double measured_roundtrip_error(double x) {
    if (!(std::fabs(x) <= 1.0)) throw_numeric("measured_roundtrip_error requires |x| <= 1");
    return std::fabs(x - round_to_bf16(x).to_double());
}

}  // namespace fe2e
