#pragma once

#include <string>
#include <vector>

#include "bf16.hpp"
#include "grid.hpp"

namespace fe2e {

enum class QuantKind { Uniform, Inverse, Logarithmic };

const char* quant_kind_name(QuantKind kind);
QuantKind quant_kind_from_name(const std::string& name);

// Ground-truth quantization scheme: maps depth through X = D, 1/D or ln(D),
// then min-max scales X onto [-1, 1].
struct QuantScheme {
    QuantKind kind = QuantKind::Logarithmic;
    double d_min = 0.1;
    double d_max = 80.0;

    QuantScheme() = default;
    QuantScheme(QuantKind k, double lo, double hi);

    // Transformed-space coordinates of the scheme.
    double transform(double depth) const;       // X(d)
    double inverse_transform(double x) const;   // d(X)
    double x_min() const;
    double x_max() const;

    double to_label(double depth) const;        // X -> [-1, 1], no rounding
    double from_label(double label) const;      // exact functional inverse
};

// Label grid in [-1,1] after clipping and BF16 rounding, with validity mask.
struct NormalizedLabel {
    GridD values;
    GridMask valid;
};

// Per-pixel scheme encoding. Depth <= 0 under Inverse/Logarithmic is marked
// invalid rather than raising.
NormalizedLabel encode(const QuantScheme& scheme, const GridD& depth, const GridMask& valid,
                       const StepModel& step = StepModel());

// Exact inverse of the encode mapping (before rounding). Invalid pixels decode to 0.
GridD decode(const QuantScheme& scheme, const NormalizedLabel& label);

struct WorstCaseError {
    double abs_error_m = 0.0;
    double absrel = 0.0;
};

// Closed-form worst-case quantization error: dX = (x_max - x_min)/2 * delta_v
// pushed through the local derivative of the inverse transform.
WorstCaseError worst_case_error(const QuantScheme& scheme, double depth, const StepModel& step);

// True iff the two depths map at least one quantization step apart in the
// scheme's transformed space.
bool distinguishable(const QuantScheme& scheme, double d1, double d2, const StepModel& step);

// Eq-style percentile normalization: D_log = ln(D + 1e-6), the [2nd, 98th]
// percentile band of valid D_log is affinely mapped to [-1, 1], values outside
// are clipped, then BF16-rounded. Depths below 1e-6 m are marked invalid.
NormalizedLabel percentile_normalize(const GridD& depth, const GridMask& valid);

// Percentile (0..100) of the sorted values by linear interpolation between
// order statistics (inclusive definition).
double percentile(std::vector<double> values, double p);

// One row of the quantization-error table.
struct ErrorTableRow {
    std::string scheme;
    double depth_m = 0.0;
    double abs_error_m = 0.0;
    double absrel = 0.0;
};

std::vector<ErrorTableRow> error_table(const std::vector<QuantScheme>& schemes,
                                       const std::vector<double>& depths, const StepModel& step);

}  // namespace fe2e
