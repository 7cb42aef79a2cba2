#include "metrics.hpp"

#include <cmath>

namespace fe2e {

namespace {

constexpr double kDepthFloor = 1e-6;
constexpr double kRadToDeg = 57.29577951308232087680;

void check_shapes(int w, int h, const GridMask& mask) {
    if (!mask.same_shape(w, h)) throw_numeric("metrics: mask shape mismatch");
}

}  // namespace

AffineFit affine_align(const GridD& pred, const GridD& gt, const GridMask& mask, AlignSpace space) {
    if (pred.width != gt.width || pred.height != gt.height) {
        throw_numeric("affine_align: grid shape mismatch");
    }
    check_shapes(pred.width, pred.height, mask);

    // accumulate normal equations over the valid mask in the chosen space
    double sp = 0.0, spp = 0.0, sg = 0.0, spg = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask.data[i]) continue;
        double p = pred.data[i];
        double g = gt.data[i];
        if (space == AlignSpace::Disparity) {
            if (!(p > 0.0) || !(g > 0.0)) continue;  // disparity undefined
            p = 1.0 / p;
            g = 1.0 / g;
        }
        sp += p;
        spp += p * p;
        sg += g;
        spg += p * g;
        ++n;
    }
    if (n < 2) throw_numeric("affine_align: needs >= 2 valid pixels");

    double det = spp * n - sp * sp;
    double denom_scale = spp - sp * sp / n;
    if (!(std::fabs(denom_scale) > 1e-12 * std::max(1.0, spp))) {
        throw_numeric("affine_align: degenerate fit (constant prediction)");
    }
    AffineFit fit;
    fit.scale = (spg * n - sp * sg) / det;
    fit.shift = (sg - fit.scale * sp) / n;

    fit.aligned = GridD(pred.width, pred.height, 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double p = pred.data[i];
        if (space == AlignSpace::Disparity) {
            if (!(p > 0.0)) {
                fit.aligned.data[i] = kDepthFloor;
                ++fit.floored_pixels;
                continue;
            }
            double disp = fit.scale / p + fit.shift;
            if (!(disp > 0.0)) {
                fit.aligned.data[i] = kDepthFloor;
                ++fit.floored_pixels;
                continue;
            }
            fit.aligned.data[i] = 1.0 / disp;
        } else {
            fit.aligned.data[i] = fit.scale * p + fit.shift;
        }
    }
    return fit;
}

double absrel(const GridD& aligned_pred, const GridD& gt, const GridMask& mask) {
    check_shapes(aligned_pred.width, aligned_pred.height, mask);
    double total = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < aligned_pred.size(); ++i) {
        if (!mask.data[i]) continue;
        if (!(gt.data[i] > 0.0)) throw_numeric("absrel: ground truth must be positive on the mask");
        total += std::fabs(aligned_pred.data[i] - gt.data[i]) / gt.data[i];
        ++n;
    }
    if (n == 0) throw_numeric("absrel: empty valid mask");
    return total / n;
}

double delta1(const GridD& aligned_pred, const GridD& gt, const GridMask& mask) {
    check_shapes(aligned_pred.width, aligned_pred.height, mask);
    int n = 0, pass = 0;
    for (std::size_t i = 0; i < aligned_pred.size(); ++i) {
        if (!mask.data[i]) continue;
        if (!(gt.data[i] > 0.0)) throw_numeric("delta1: ground truth must be positive on the mask");
        double d = std::max(aligned_pred.data[i], kDepthFloor);
        double ratio = std::max(d / gt.data[i], gt.data[i] / d);
        if (ratio < 1.25) ++pass;
        ++n;
    }
    if (n == 0) throw_numeric("delta1: empty valid mask");
    return static_cast<double>(pass) / n;
}

namespace {

bool normalized_or_skip(const Vec3& v, Vec3& out) {
    double norm = v.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) return false;
    out = {v.x / norm, v.y / norm, v.z / norm};
    return true;
}

double angle_deg(const Vec3& a, const Vec3& b) {
    double dot = a.dot(b);
    dot = std::min(1.0, std::max(-1.0, dot));  // clamp against rounding drift
    return std::acos(dot) * kRadToDeg;
}

}  // namespace

double mean_angular_error(const GridV3& pred, const GridV3& gt, const GridMask& mask) {
    check_shapes(pred.width, pred.height, mask);
    double total = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask.data[i]) continue;
        Vec3 p, g;
        if (!normalized_or_skip(pred.data[i], p) || !normalized_or_skip(gt.data[i], g)) continue;
        total += angle_deg(p, g);
        ++n;
    }
    if (n == 0) throw_numeric("mean_angular_error: empty valid mask");
    return total / n;
}

double within_11_25(const GridV3& pred, const GridV3& gt, const GridMask& mask) {
    check_shapes(pred.width, pred.height, mask);
    int n = 0, pass = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask.data[i]) continue;
        Vec3 p, g;
        if (!normalized_or_skip(pred.data[i], p) || !normalized_or_skip(gt.data[i], g)) continue;
        if (angle_deg(p, g) < 11.25) ++pass;
        ++n;
    }
    if (n == 0) throw_numeric("within_11_25: empty valid mask");
    return static_cast<double>(pass) / n;
}

DepthMetrics depth_metrics(const GridD& pred, const GridD& gt, const GridMask& mask,
                           AlignSpace space) {
    AffineFit fit = affine_align(pred, gt, mask, space);
    DepthMetrics m;
    m.scale = fit.scale;
    m.shift = fit.shift;
    m.absrel = absrel(fit.aligned, gt, mask);
    m.delta1 = delta1(fit.aligned, gt, mask);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask.data[i]) continue;
        ++m.n_valid;
        if (fit.aligned.data[i] <= kDepthFloor) ++m.floored_pixels;
    }
    return m;
}

NormalMetrics normal_metrics(const GridV3& pred, const GridV3& gt, const GridMask& mask) {
    NormalMetrics m;
    m.mean_err_deg = mean_angular_error(pred, gt, mask);
    m.within_11_25 = within_11_25(pred, gt, mask);
    for (std::size_t i = 0; i < mask.size(); ++i) m.n_valid += mask.data[i] ? 1 : 0;
    return m;
}

}  // namespace fe2e
