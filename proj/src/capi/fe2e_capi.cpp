#include "fe2e/fe2e.h"

#include <cstring>
#include <exception>
#include <string>

#include "bf16.hpp"
#include "depth_codec.hpp"
#include "error.hpp"
#include "io/config.hpp"
#include "lab.hpp"
#include "metrics.hpp"

namespace {

thread_local std::string t_last_error = "ok";

fe2e_status to_status(fe2e::Status s) {
    switch (s) {
        case fe2e::Status::Ok: return FE2E_OK;
        case fe2e::Status::Usage: return FE2E_ERR_USAGE;
        case fe2e::Status::Io: return FE2E_ERR_IO;
        case fe2e::Status::Numeric: return FE2E_ERR_NUMERIC;
    }
    return FE2E_ERR_INTERNAL;
}

template <typename Fn>
fe2e_status guarded(Fn&& fn) {
    try {
        fn();
        return FE2E_OK;
    } catch (const fe2e::LabError& e) {
        t_last_error = e.what();
        return to_status(e.status());
    } catch (const std::exception& e) {
        t_last_error = e.what();
        return FE2E_ERR_INTERNAL;
    } catch (...) {
        t_last_error = "unknown error";
        return FE2E_ERR_INTERNAL;
    }
}

fe2e_status require(bool ok, const char* message) {
    if (ok) return FE2E_OK;
    t_last_error = message;
    return FE2E_ERR_USAGE;
}

fe2e::GridD make_grid(const double* data, int width, int height) {
    fe2e::GridD g(width, height, 0.0);
    std::memcpy(g.data.data(), data, g.size() * sizeof(double));
    return g;
}

fe2e::GridMask make_mask(const uint8_t* valid, int width, int height) {
    fe2e::GridMask m(width, height, 1);
    if (valid) {
        for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = valid[i] ? 1 : 0;
    }
    return m;
}

}  // namespace

struct fe2e_codec {
    fe2e::QuantScheme scheme;
    fe2e::StepModel step;
};

struct fe2e_run {
    fe2e::KeyValueConfig config;
};

extern "C" {

const char* fe2e_version(void) { return fe2e::lab_version(); }

const char* fe2e_last_error(void) { return t_last_error.c_str(); }

fe2e_status fe2e_bf16_round(double x, double* rounded) {
    if (auto s = require(rounded != nullptr, "rounded must not be NULL")) return s;
    return guarded([&] { *rounded = fe2e::round_to_bf16(x).to_double(); });
}

fe2e_status fe2e_bf16_bits(double x, uint16_t* bits) {
    if (auto s = require(bits != nullptr, "bits must not be NULL")) return s;
    return guarded([&] { *bits = fe2e::round_to_bf16(x).bits; });
}

fe2e_status fe2e_bf16_ulp(double x, double* spacing) {
    if (auto s = require(spacing != nullptr, "spacing must not be NULL")) return s;
    return guarded([&] { *spacing = fe2e::ulp_at(x); });
}

fe2e_status fe2e_bf16_roundtrip_error(double x, double* abs_error) {
    if (auto s = require(abs_error != nullptr, "abs_error must not be NULL")) return s;
    return guarded([&] { *abs_error = fe2e::measured_roundtrip_error(x); });
}

fe2e_status fe2e_codec_create(fe2e_quant_kind kind, double d_min, double d_max, double delta_v,
                              fe2e_codec** out) {
    if (auto s = require(out != nullptr, "out must not be NULL")) return s;
    *out = nullptr;
    return guarded([&] {
        fe2e::QuantKind k;
        switch (kind) {
            case FE2E_QUANT_UNIFORM: k = fe2e::QuantKind::Uniform; break;
            case FE2E_QUANT_INVERSE: k = fe2e::QuantKind::Inverse; break;
            case FE2E_QUANT_LOGARITHMIC: k = fe2e::QuantKind::Logarithmic; break;
            default: fe2e::throw_usage("unknown quantization kind");
        }
        *out = new fe2e_codec{fe2e::QuantScheme(k, d_min, d_max), fe2e::StepModel(delta_v)};
    });
}

void fe2e_codec_destroy(fe2e_codec* codec) { delete codec; }

fe2e_status fe2e_codec_worst_case_error(const fe2e_codec* codec, double depth_m,
                                        double* abs_error_m, double* absrel) {
    if (auto s = require(codec && abs_error_m && absrel, "NULL argument")) return s;
    return guarded([&] {
        auto err = fe2e::worst_case_error(codec->scheme, depth_m, codec->step);
        *abs_error_m = err.abs_error_m;
        *absrel = err.absrel;
    });
}

fe2e_status fe2e_codec_distinguishable(const fe2e_codec* codec, double d1, double d2,
                                       int* distinguishable) {
    if (auto s = require(codec && distinguishable, "NULL argument")) return s;
    return guarded([&] {
        *distinguishable = fe2e::distinguishable(codec->scheme, d1, d2, codec->step) ? 1 : 0;
    });
}

fe2e_status fe2e_codec_encode(const fe2e_codec* codec, const double* depth_m, const uint8_t* valid,
                              int width, int height, double* labels, uint8_t* label_valid) {
    if (auto s = require(codec && depth_m && labels, "NULL argument")) return s;
    return guarded([&] {
        auto label = fe2e::encode(codec->scheme, make_grid(depth_m, width, height),
                                  make_mask(valid, width, height), codec->step);
        std::memcpy(labels, label.values.data.data(), label.values.size() * sizeof(double));
        if (label_valid) {
            std::memcpy(label_valid, label.valid.data.data(), label.valid.size());
        }
    });
}

fe2e_status fe2e_codec_decode(const fe2e_codec* codec, const double* labels, const uint8_t* valid,
                              int width, int height, double* depth_m) {
    if (auto s = require(codec && labels && depth_m, "NULL argument")) return s;
    return guarded([&] {
        fe2e::NormalizedLabel label;
        label.values = make_grid(labels, width, height);
        label.valid = make_mask(valid, width, height);
        auto depth = fe2e::decode(codec->scheme, label);
        std::memcpy(depth_m, depth.data.data(), depth.size() * sizeof(double));
    });
}

fe2e_status fe2e_percentile_normalize(const double* depth_m, const uint8_t* valid, int width,
                                      int height, double* labels, uint8_t* label_valid) {
    if (auto s = require(depth_m && labels, "NULL argument")) return s;
    return guarded([&] {
        auto label = fe2e::percentile_normalize(make_grid(depth_m, width, height),
                                                make_mask(valid, width, height));
        std::memcpy(labels, label.values.data.data(), label.values.size() * sizeof(double));
        if (label_valid) {
            std::memcpy(label_valid, label.valid.data.data(), label.valid.size());
        }
    });
}

fe2e_status fe2e_affine_align(const double* pred, const double* gt, const uint8_t* valid,
                              int count, double* scale, double* shift) {
    if (auto s = require(pred && gt && scale && shift, "NULL argument")) return s;
    return guarded([&] {
        auto fit = fe2e::affine_align(make_grid(pred, count, 1), make_grid(gt, count, 1),
                                      make_mask(valid, count, 1));
        *scale = fit.scale;
        *shift = fit.shift;
    });
}

fe2e_status fe2e_depth_metrics(const double* pred, const double* gt, const uint8_t* valid,
                               int count, int align_in_disparity, double* absrel, double* delta1) {
    if (auto s = require(pred && gt && absrel && delta1, "NULL argument")) return s;
    return guarded([&] {
        auto m = fe2e::depth_metrics(make_grid(pred, count, 1), make_grid(gt, count, 1),
                                     make_mask(valid, count, 1),
                                     align_in_disparity ? fe2e::AlignSpace::Disparity
                                                        : fe2e::AlignSpace::Depth);
        *absrel = m.absrel;
        *delta1 = m.delta1;
    });
}

fe2e_status fe2e_normal_metrics(const double* pred_xyz, const double* gt_xyz, const uint8_t* valid,
                                int count, double* mean_err_deg, double* within_11_25) {
    if (auto s = require(pred_xyz && gt_xyz && mean_err_deg && within_11_25, "NULL argument")) {
        return s;
    }
    return guarded([&] {
        fe2e::GridV3 pred(count, 1), gt(count, 1);
        for (int i = 0; i < count; ++i) {
            pred.data[static_cast<std::size_t>(i)] = {pred_xyz[3 * i], pred_xyz[3 * i + 1],
                                                      pred_xyz[3 * i + 2]};
            gt.data[static_cast<std::size_t>(i)] = {gt_xyz[3 * i], gt_xyz[3 * i + 1],
                                                    gt_xyz[3 * i + 2]};
        }
        auto m = fe2e::normal_metrics(pred, gt, make_mask(valid, count, 1));
        *mean_err_deg = m.mean_err_deg;
        *within_11_25 = m.within_11_25;
    });
}

fe2e_status fe2e_run_create(fe2e_run** out) {
    if (auto s = require(out != nullptr, "out must not be NULL")) return s;
    return guarded([&] { *out = new fe2e_run(); });
}

void fe2e_run_destroy(fe2e_run* run) { delete run; }

fe2e_status fe2e_run_load_file(fe2e_run* run, const char* path) {
    if (auto s = require(run && path, "NULL argument")) return s;
    return guarded([&] { run->config.load_file(path); });
}

fe2e_status fe2e_run_set(fe2e_run* run, const char* key, const char* value) {
    if (auto s = require(run && key && value, "NULL argument")) return s;
    return guarded([&] { run->config.set(key, value); });
}

fe2e_status fe2e_run_execute(fe2e_run* run, const char* command) {
    if (auto s = require(run && command, "NULL argument")) return s;
    return guarded([&] { fe2e::run_command(command, run->config); });
}

}  // extern "C"
