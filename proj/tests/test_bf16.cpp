#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "bf16.hpp"
#include "error.hpp"
#include "rng.hpp"

using namespace fe2e;

namespace {

// Independent enumeration oracle: decodes every normalized bf16 encoding via
// integer scaling (128 + F) * 2^(E - 134) and rounds by scanning the sorted
// value table, ties to even mantissa.
struct Bf16Table {
    std::vector<std::pair<double, std::uint16_t>> sorted;  // (value, bits), normalized only

    Bf16Table() {
        for (std::uint32_t b = 0; b < 0x10000u; ++b) {
            auto bits = static_cast<std::uint16_t>(b);
            unsigned e = (bits >> 7) & 0xFFu;
            if (e < 1 || e > 254) continue;
            unsigned f = bits & 0x7Fu;
            double mag = std::ldexp(static_cast<double>(128 + f), static_cast<int>(e) - 134);
            sorted.emplace_back((bits & 0x8000u) ? -mag : mag, bits);
        }
        std::sort(sorted.begin(), sorted.end());
    }

    std::uint16_t nearest(double x) const {
        auto it = std::lower_bound(sorted.begin(), sorted.end(), std::make_pair(x, std::uint16_t{0}));
        if (it == sorted.begin()) return it->second;
        if (it == sorted.end()) return (it - 1)->second;
        auto lo = it - 1;
        double d_lo = x - lo->first;
        double d_hi = it->first - x;
        if (d_lo < d_hi) return lo->second;
        if (d_hi < d_lo) return it->second;
        // exact tie: pick the even 7-bit mantissa
        return ((lo->second & 1u) == 0) ? lo->second : it->second;
    }
};

const Bf16Table& table() {
    static Bf16Table t;
    return t;
}

}  // namespace

TEST_CASE("decode agrees with integer-scaling enumeration on all encodings") {
    for (const auto& [value, bits] : table().sorted) {
        CHECK(Bf16::from_bits(bits).to_double() == value);
    }
}

TEST_CASE("round_to_bf16 matches the enumeration oracle") {
    // every representable value round-trips to itself
    for (const auto& [value, bits] : table().sorted) {
        CHECK(round_to_bf16(value).bits == bits);
    }
    // random values across several binades
    Rng rng(7);
    for (int i = 0; i < 20000; ++i) {
        double x = rng.uniform(-4.0, 4.0);
        if (x == 0.0) continue;
        CHECK(round_to_bf16(x).bits == table().nearest(x));
    }
    // dense sweep over the worst-case binade
    for (int i = 0; i <= 100000; ++i) {
        double x = 0.5 + 0.5 * i / 100000.0;
        CHECK(round_to_bf16(x).bits == table().nearest(x));
    }
}

TEST_CASE("exact values and the documented tie") {
    CHECK(round_to_bf16(1.0).to_double() == 1.0);
    CHECK(round_to_bf16(0.0).to_double() == 0.0);
    // 0.5 + 2^-9 sits exactly between 0.5 (even mantissa) and 0.50390625 (odd)
    CHECK(round_to_bf16(0.501953125).to_double() == 0.5);
    // 0.7 lands on the 2^-8 grid in [0.5, 1.0)
    double r = round_to_bf16(0.7).to_double();
    CHECK(r == 0.69921875);
    CHECK(r == Bf16::from_bits(table().nearest(0.7)).to_double());
    CHECK(std::fabs(0.7 - r) <= 0.5 / 256.0);
}

TEST_CASE("round_to_bf16 rejects out-of-model inputs") {
    CHECK_THROWS_AS(round_to_bf16(std::numeric_limits<double>::infinity()), LabError);
    CHECK_THROWS_AS(round_to_bf16(std::numeric_limits<double>::quiet_NaN()), LabError);
    CHECK_THROWS_AS(round_to_bf16(1e-45), LabError);   // would need a subnormal
    CHECK_THROWS_AS(round_to_bf16(1e40), LabError);    // beyond the largest finite bf16
}

TEST_CASE("ulp_at returns the binade spacing") {
    CHECK(ulp_at(0.75) == 1.0 / 256.0);
    CHECK(ulp_at(0.5) == 1.0 / 256.0);
    CHECK(ulp_at(0.25) == 1.0 / 512.0);
    CHECK(ulp_at(1.5) == 1.0 / 128.0);
    CHECK(ulp_at(-0.75) == 1.0 / 256.0);
    CHECK_THROWS_AS(ulp_at(0.0), LabError);
    CHECK_THROWS_AS(ulp_at(1e-40), LabError);
    CHECK_THROWS_AS(ulp_at(std::numeric_limits<double>::infinity()), LabError);
}

TEST_CASE("measured_roundtrip_error examples") {
    CHECK(measured_roundtrip_error(1.0) == 0.0);
    CHECK(measured_roundtrip_error(0.501953125) == 0.001953125);
    for (const auto& [value, bits] : table().sorted) {
        if (std::fabs(value) <= 1.0) CHECK(measured_roundtrip_error(value) == 0.0);
    }
    CHECK_THROWS_AS(measured_roundtrip_error(1.5), LabError);
}

TEST_CASE("idempotence and monotonicity") {
    Rng rng(11);
    double prev_x = 0.0, prev_r = 0.0;
    bool have_prev = false;
    std::vector<double> xs;
    for (int i = 0; i < 5000; ++i) xs.push_back(rng.uniform(-2.0, 2.0));
    std::sort(xs.begin(), xs.end());
    for (double x : xs) {
        if (x == 0.0) continue;
        double r = round_to_bf16(x).to_double();
        CHECK(round_to_bf16(r).to_double() == r);
        if (have_prev) {
            CHECK(prev_x <= x);
            CHECK(prev_r <= r);
        }
        prev_x = x;
        prev_r = r;
        have_prev = true;
    }
}

TEST_CASE("round-to-nearest halves the spacing-model bound") {
    StepModel step;
    CHECK(step.delta_v == 1.0 / 256.0);
    CHECK_THROWS_AS(StepModel(0.0), LabError);
    CHECK_THROWS_AS(StepModel(1.0 / 64.0), LabError);

    Rng rng(13);
    for (int i = 0; i < 100000; ++i) {
        double x = rng.uniform(0.5, 1.0);
        double err = measured_roundtrip_error(x);
        CHECK(err <= 1.0 / 512.0);
        CHECK(err <= step.delta_v);
        CHECK(err <= ulp_at(x) * 0.5);
    }
}
