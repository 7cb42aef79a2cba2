#include "depth_codec.hpp"

#include <algorithm>
#include <cmath>

namespace fe2e {

namespace {
constexpr double kLogEpsilon = 1e-6;

double clip_unit(double v) { return std::min(1.0, std::max(-1.0, v)); }
}  // namespace

const char* quant_kind_name(QuantKind kind) {
    switch (kind) {
        case QuantKind::Uniform: return "uniform";
        case QuantKind::Inverse: return "inverse";
        case QuantKind::Logarithmic: return "logarithmic";
    }
    return "unknown";
}

QuantKind quant_kind_from_name(const std::string& name) {
    if (name == "uniform") return QuantKind::Uniform;
    if (name == "inverse") return QuantKind::Inverse;
    if (name == "logarithmic" || name == "log") return QuantKind::Logarithmic;
    throw_usage("unknown quantization scheme '" + name + "' (expected uniform|inverse|log)");
}

QuantScheme::QuantScheme(QuantKind k, double lo, double hi) : kind(k), d_min(lo), d_max(hi) {
    if (!(d_min < d_max)) throw_numeric("quant scheme requires d_min < d_max");
    if (kind != QuantKind::Uniform && !(d_min > 0.0)) {
        throw_numeric("inverse/logarithmic schemes require d_min > 0");
    }
    if (kind == QuantKind::Uniform && d_min < 0.0) {
        throw_numeric("uniform scheme requires d_min >= 0");
    }
}

double QuantScheme::transform(double depth) const {
    switch (kind) {
        case QuantKind::Uniform: return depth;
        case QuantKind::Inverse: return 1.0 / depth;
        case QuantKind::Logarithmic: return std::log(depth);
    }
    return depth;
}

double QuantScheme::inverse_transform(double x) const {
    switch (kind) {
        case QuantKind::Uniform: return x;
        case QuantKind::Inverse: return 1.0 / x;
        case QuantKind::Logarithmic: return std::exp(x);
    }
    return x;
}

double QuantScheme::x_min() const {
    // Inverse reverses ordering: the smallest transformed value is at d_max.
    return kind == QuantKind::Inverse ? transform(d_max) : transform(d_min);
}

double QuantScheme::x_max() const {
    return kind == QuantKind::Inverse ? transform(d_min) : transform(d_max);
}

double QuantScheme::to_label(double depth) const {
    double x = transform(depth);
    return 2.0 * (x - x_min()) / (x_max() - x_min()) - 1.0;
}

double QuantScheme::from_label(double label) const {
    double x = x_min() + (label + 1.0) * 0.5 * (x_max() - x_min());
    return inverse_transform(x);
}

NormalizedLabel encode(const QuantScheme& scheme, const GridD& depth, const GridMask& valid,
                       const StepModel&) {
    if (!valid.same_shape(depth.width, depth.height)) throw_numeric("encode: mask/depth shape mismatch");
    NormalizedLabel out;
    out.values = GridD(depth.width, depth.height, 0.0);
    out.valid = GridMask(depth.width, depth.height, 0);
    for (std::size_t i = 0; i < depth.size(); ++i) {
        if (!valid.data[i]) continue;
        double d = depth.data[i];
        if (scheme.kind != QuantKind::Uniform && !(d > 0.0)) continue;  // stays invalid
        double label = clip_unit(scheme.to_label(d));
        out.values.data[i] = round_to_bf16(label).to_double();
        out.valid.data[i] = 1;
    }
    return out;
}

GridD decode(const QuantScheme& scheme, const NormalizedLabel& label) {
    GridD out(label.values.width, label.values.height, 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!label.valid.data[i]) continue;
        out.data[i] = scheme.from_label(label.values.data[i]);
    }
    return out;
}

WorstCaseError worst_case_error(const QuantScheme& scheme, double depth, const StepModel& step) {
    if (!(depth >= scheme.d_min && depth <= scheme.d_max)) {
        throw_numeric("worst_case_error: depth outside scheme range");
    }
    double dx = (scheme.x_max() - scheme.x_min()) * 0.5 * step.delta_v;
    double abs_error = 0.0;
    switch (scheme.kind) {
        case QuantKind::Uniform: abs_error = dx; break;
        case QuantKind::Inverse: abs_error = depth * depth * dx; break;  // |d(1/P)/dP| = D^2
        case QuantKind::Logarithmic: abs_error = depth * dx; break;      // |d(e^L)/dL| = D
    }
    if (!(depth > 0.0)) throw_numeric("worst_case_error: absrel undefined at zero depth");
    return {abs_error, abs_error / depth};
}

bool distinguishable(const QuantScheme& scheme, double d1, double d2, const StepModel& step) {
    double dx = (scheme.x_max() - scheme.x_min()) * 0.5 * step.delta_v;
    return std::fabs(scheme.transform(d1) - scheme.transform(d2)) >= dx;
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw_numeric("percentile of empty set");
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values[0];
    double rank = (p / 100.0) * static_cast<double>(values.size() - 1);
    std::size_t lo = static_cast<std::size_t>(rank);
    if (lo >= values.size() - 1) return values.back();
    double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

NormalizedLabel percentile_normalize(const GridD& depth, const GridMask& valid) {
    if (!valid.same_shape(depth.width, depth.height)) {
        throw_numeric("percentile_normalize: mask/depth shape mismatch");
    }
    NormalizedLabel out;
    out.values = GridD(depth.width, depth.height, 0.0);
    out.valid = GridMask(depth.width, depth.height, 0);

    std::vector<double> log_depths;
    log_depths.reserve(depth.size());
    std::vector<std::size_t> indices;
    indices.reserve(depth.size());
    for (std::size_t i = 0; i < depth.size(); ++i) {
        if (!valid.data[i]) continue;
        if (depth.data[i] < kLogEpsilon) continue;  // below the log epsilon: rejected
        indices.push_back(i);
        log_depths.push_back(std::log(depth.data[i] + kLogEpsilon));
    }
    if (log_depths.size() < 2) throw_numeric("percentile_normalize: needs >= 2 valid depths");

    double p2 = percentile(log_depths, 2.0);
    double p98 = percentile(log_depths, 98.0);
    if (!(p98 > p2)) throw_numeric("percentile_normalize: degenerate depth grid (p98 == p2)");

    for (std::size_t k = 0; k < indices.size(); ++k) {
        double y = ((log_depths[k] - p2) / (p98 - p2) - 0.5) * 2.0;
        out.values.data[indices[k]] = round_to_bf16(clip_unit(y)).to_double();
        out.valid.data[indices[k]] = 1;
    }
    return out;
}

std::vector<ErrorTableRow> error_table(const std::vector<QuantScheme>& schemes,
                                       const std::vector<double>& depths, const StepModel& step) {
    std::vector<ErrorTableRow> rows;
    rows.reserve(schemes.size() * depths.size());
    for (const auto& scheme : schemes) {
        for (double d : depths) {
            auto err = worst_case_error(scheme, d, step);
            rows.push_back({quant_kind_name(scheme.kind), d, err.abs_error_m, err.absrel});
        }
    }
    return rows;
}

}  // namespace fe2e
