#pragma once

#include <string>

#include "grid.hpp"

namespace fe2e {

enum class AlignSpace {
    Depth,      // least squares on depth values (default)
    Disparity,  // least squares on reciprocal depth
};

struct AffineFit {
    double scale = 1.0;
    double shift = 0.0;
    GridD aligned;
    int floored_pixels = 0;  // aligned values clamped up to the positive floor
};

// Closed-form least-squares (s, t) minimizing sum over the valid mask of
// (s * pred + t - gt)^2, solved from the 2x2 normal equations.
AffineFit affine_align(const GridD& pred, const GridD& gt, const GridMask& mask,
                       AlignSpace space = AlignSpace::Depth);

// Mean |d - d_gt| / d_gt over the valid mask.
double absrel(const GridD& aligned_pred, const GridD& gt, const GridMask& mask);

// Fraction of valid pixels with max(d/d_gt, d_gt/d) < 1.25. Predictions are
// floored at 1e-6 so the ratio is defined after alignment.
double delta1(const GridD& aligned_pred, const GridD& gt, const GridMask& mask);

// Mean arccos(clamp(n . n_gt, -1, 1)) in degrees; vectors are renormalized and
// zero-length entries are excluded.
double mean_angular_error(const GridV3& pred, const GridV3& gt, const GridMask& mask);

// Fraction of valid pixels with angular error strictly below 11.25 degrees.
double within_11_25(const GridV3& pred, const GridV3& gt, const GridMask& mask);

struct DepthMetrics {
    int n_valid = 0;
    double absrel = 0.0;
    double delta1 = 0.0;
    double scale = 1.0;
    double shift = 0.0;
    int floored_pixels = 0;  // aligned values clamped up to the positive floor
};

struct NormalMetrics {
    int n_valid = 0;
    double mean_err_deg = 0.0;
    double within_11_25 = 0.0;
};

DepthMetrics depth_metrics(const GridD& pred, const GridD& gt, const GridMask& mask,
                           AlignSpace space = AlignSpace::Depth);
NormalMetrics normal_metrics(const GridV3& pred, const GridV3& gt, const GridMask& mask);

}  // namespace fe2e
