/*
 * fe2e.h - C API of the FE2E numerical laboratory.
 *
 * The library wraps a C++ core behind opaque handles and integer status
 * codes so it can be driven from C, scripting languages, or the bundled CLI.
 * All functions return fe2e_status; out-parameters are written only on
 * FE2E_OK. The last error message is thread-local.
 */
#ifndef FE2E_H
#define FE2E_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FE2E_API __declspec(dllexport)
#else
#define FE2E_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fe2e_status {
    FE2E_OK = 0,
    FE2E_ERR_USAGE = 1,   /* bad arguments, flags or configuration */
    FE2E_ERR_IO = 2,      /* file errors, corruption, checksum mismatch */
    FE2E_ERR_NUMERIC = 3, /* domain errors, degenerate inputs, contract violations */
    FE2E_ERR_INTERNAL = 4
} fe2e_status;

FE2E_API const char* fe2e_version(void);

/* Message for the most recent failure on this thread; never NULL. */
FE2E_API const char* fe2e_last_error(void);

/* ---------------------------------------------------------- bf16 numerics */

/* Nearest BF16 value (round-to-nearest, ties-to-even). */
FE2E_API fe2e_status fe2e_bf16_round(double x, double* rounded);

/* Raw 16-bit encoding of the rounded value. */
FE2E_API fe2e_status fe2e_bf16_bits(double x, uint16_t* bits);

/* BF16 grid spacing in the binade containing x. */
FE2E_API fe2e_status fe2e_bf16_ulp(double x, double* spacing);

/* |x - decode(round(x))| for |x| <= 1. */
FE2E_API fe2e_status fe2e_bf16_roundtrip_error(double x, double* abs_error);

/* ------------------------------------------------------------ depth codec */

typedef enum fe2e_quant_kind {
    FE2E_QUANT_UNIFORM = 0,
    FE2E_QUANT_INVERSE = 1,
    FE2E_QUANT_LOGARITHMIC = 2
} fe2e_quant_kind;

typedef struct fe2e_codec fe2e_codec;

/* delta_v is the quantization step in normalized [-1,1] space (e.g. 1/256). */
FE2E_API fe2e_status fe2e_codec_create(fe2e_quant_kind kind, double d_min, double d_max,
                                       double delta_v, fe2e_codec** out);
FE2E_API void fe2e_codec_destroy(fe2e_codec* codec);

/* Worst-case absolute error (meters) and AbsRel at the given depth. */
FE2E_API fe2e_status fe2e_codec_worst_case_error(const fe2e_codec* codec, double depth_m,
                                                 double* abs_error_m, double* absrel);

/* 1 when the two depths map at least one quantization step apart. */
FE2E_API fe2e_status fe2e_codec_distinguishable(const fe2e_codec* codec, double d1, double d2,
                                                int* distinguishable);

/* Row-major grids of width*height entries; valid entries are nonzero bytes.
 * Encode clips to [-1,1] and BF16-rounds; decode inverts the scheme mapping.
 * label_valid may alias valid. Invalid pixels decode/encode to 0. */
FE2E_API fe2e_status fe2e_codec_encode(const fe2e_codec* codec, const double* depth_m,
                                       const uint8_t* valid, int width, int height,
                                       double* labels, uint8_t* label_valid);
FE2E_API fe2e_status fe2e_codec_decode(const fe2e_codec* codec, const double* labels,
                                       const uint8_t* valid, int width, int height,
                                       double* depth_m);

/* Percentile normalization of ln(depth + 1e-6) onto [-1,1] (2nd/98th anchors). */
FE2E_API fe2e_status fe2e_percentile_normalize(const double* depth_m, const uint8_t* valid,
                                               int width, int height, double* labels,
                                               uint8_t* label_valid);

/* ------------------------------------------------------------ geo metrics */

/* Least-squares scale/shift of pred onto gt over the valid mask. */
FE2E_API fe2e_status fe2e_affine_align(const double* pred, const double* gt, const uint8_t* valid,
                                       int count, double* scale, double* shift);

/* AbsRel and delta1 after affine alignment (align_in_disparity: 0 or 1). */
FE2E_API fe2e_status fe2e_depth_metrics(const double* pred, const double* gt,
                                        const uint8_t* valid, int count, int align_in_disparity,
                                        double* absrel, double* delta1);

/* Mean angular error (degrees) and the fraction under 11.25 degrees.
 * Vectors are packed xyz per pixel (3*count doubles) and renormalized. */
FE2E_API fe2e_status fe2e_normal_metrics(const double* pred_xyz, const double* gt_xyz,
                                         const uint8_t* valid, int count, double* mean_err_deg,
                                         double* within_11_25);

/* ------------------------------------------------------------ run engine */

/* A run handle accumulates key=value settings (optionally from a config
 * file; later assignments win) and executes one CLI-level command:
 * quant-table | gen-data | train | eval | field-plot | ablate. */
typedef struct fe2e_run fe2e_run;

FE2E_API fe2e_status fe2e_run_create(fe2e_run** out);
FE2E_API void fe2e_run_destroy(fe2e_run* run);
FE2E_API fe2e_status fe2e_run_load_file(fe2e_run* run, const char* path);
FE2E_API fe2e_status fe2e_run_set(fe2e_run* run, const char* key, const char* value);
FE2E_API fe2e_status fe2e_run_execute(fe2e_run* run, const char* command);

#ifdef __cplusplus
}
#endif

#endif /* FE2E_H */
