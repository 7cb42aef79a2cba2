#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fe2e/fe2e.h"

namespace fs = std::filesystem;

TEST_CASE("bf16 functions over the C surface") {
    double r = 0.0;
    REQUIRE(fe2e_bf16_round(0.501953125, &r) == FE2E_OK);
    CHECK(r == 0.5);

    uint16_t bits = 0;
    REQUIRE(fe2e_bf16_bits(1.0, &bits) == FE2E_OK);
    CHECK(bits == 0x3F80);

    double ulp = 0.0;
    REQUIRE(fe2e_bf16_ulp(0.75, &ulp) == FE2E_OK);
    CHECK(ulp == 1.0 / 256.0);

    double err = 0.0;
    REQUIRE(fe2e_bf16_roundtrip_error(0.501953125, &err) == FE2E_OK);
    CHECK(err == 0.001953125);

    CHECK(fe2e_bf16_round(std::nan(""), &r) == FE2E_ERR_NUMERIC);
    CHECK(std::string(fe2e_last_error()).find("finite") != std::string::npos);
    CHECK(fe2e_bf16_round(1.0, nullptr) == FE2E_ERR_USAGE);
}

TEST_CASE("codec handle lifecycle and the paper table values") {
    fe2e_codec* codec = nullptr;
    REQUIRE(fe2e_codec_create(FE2E_QUANT_INVERSE, 0.1, 80.0, 1.0 / 256.0, &codec) == FE2E_OK);
    REQUIRE(codec != nullptr);

    double abs_err = 0.0, absrel = 0.0;
    REQUIRE(fe2e_codec_worst_case_error(codec, 80.0, &abs_err, &absrel) == FE2E_OK);
    CHECK(abs_err == doctest::Approx(124.84375).epsilon(1e-12));

    int dist = -1;
    REQUIRE(fe2e_codec_distinguishable(codec, 39.0, 78.0, &dist) == FE2E_OK);
    CHECK(dist == 0);

    CHECK(fe2e_codec_worst_case_error(codec, 200.0, &abs_err, &absrel) == FE2E_ERR_NUMERIC);
    fe2e_codec_destroy(codec);

    // invalid scheme bounds
    fe2e_codec* bad = nullptr;
    CHECK(fe2e_codec_create(FE2E_QUANT_INVERSE, 0.0, 80.0, 1.0 / 256.0, &bad) == FE2E_ERR_NUMERIC);
    CHECK(bad == nullptr);
}

TEST_CASE("grid encode/decode round trip through the C API") {
    fe2e_codec* codec = nullptr;
    REQUIRE(fe2e_codec_create(FE2E_QUANT_LOGARITHMIC, 0.1, 80.0, 1.0 / 256.0, &codec) == FE2E_OK);

    const int n = 6;
    double depth[n] = {0.1, 0.5, 2.0, 10.0, 40.0, 80.0};
    uint8_t valid[n] = {1, 1, 1, 0, 1, 1};
    double labels[n];
    uint8_t label_valid[n];
    REQUIRE(fe2e_codec_encode(codec, depth, valid, n, 1, labels, label_valid) == FE2E_OK);
    CHECK(label_valid[3] == 0);
    CHECK(labels[0] == -1.0);
    CHECK(labels[n - 1] == 1.0);

    double back[n];
    REQUIRE(fe2e_codec_decode(codec, labels, label_valid, n, 1, back) == FE2E_OK);
    for (int i = 0; i < n; ++i) {
        if (!label_valid[i]) continue;
        double bound = 0.0, rel = 0.0;
        REQUIRE(fe2e_codec_worst_case_error(codec, depth[i], &bound, &rel) == FE2E_OK);
        CHECK(std::fabs(back[i] - depth[i]) <= bound);
    }
    fe2e_codec_destroy(codec);
}

TEST_CASE("percentile normalization and metrics through the C API") {
    const int n = 64;
    double depth[n];
    uint8_t valid[n];
    for (int i = 0; i < n; ++i) {
        depth[i] = 0.5 + 0.25 * i;
        valid[i] = 1;
    }
    double labels[n];
    uint8_t label_valid[n];
    REQUIRE(fe2e_percentile_normalize(depth, valid, n, 1, labels, label_valid) == FE2E_OK);
    for (int i = 0; i < n; ++i) {
        CHECK(labels[i] >= -1.0);
        CHECK(labels[i] <= 1.0);
    }

    // affine alignment recovers s=2, t=3
    double gt[n], pred[n];
    for (int i = 0; i < n; ++i) {
        gt[i] = depth[i];
        pred[i] = (depth[i] - 3.0) / 2.0;
    }
    double scale = 0.0, shift = 0.0;
    REQUIRE(fe2e_affine_align(pred, gt, valid, n, &scale, &shift) == FE2E_OK);
    CHECK(scale == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(shift == doctest::Approx(3.0).epsilon(1e-9));

    double absrel = -1.0, delta1 = -1.0;
    REQUIRE(fe2e_depth_metrics(pred, gt, valid, n, 0, &absrel, &delta1) == FE2E_OK);
    CHECK(absrel == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(delta1 == 1.0);

    // normal metrics: half the vectors rotated far away
    std::vector<double> nrm_gt(3 * n), nrm_pred(3 * n);
    for (int i = 0; i < n; ++i) {
        nrm_gt[3 * i + 2] = 1.0;
        if (i < n / 2) {
            nrm_pred[3 * i + 2] = 1.0;
        } else {
            nrm_pred[3 * i + 0] = 1.0;  // orthogonal
        }
    }
    double mean_err = 0.0, within = 0.0;
    REQUIRE(fe2e_normal_metrics(nrm_pred.data(), nrm_gt.data(), valid, n, &mean_err, &within) ==
            FE2E_OK);
    CHECK(mean_err == doctest::Approx(45.0).epsilon(1e-9));
    CHECK(within == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("run engine executes commands and honors file/flag precedence") {
    fs::path dir = fs::temp_directory_path() / "fe2e_capi_run";
    fs::remove_all(dir);
    fs::create_directories(dir);

    // config file asks for 1/256; the explicit set overrides to 1/512
    fs::path cfg_path = dir / "run.cfg";
    {
        std::ofstream f(cfg_path);
        f << "# quant table configuration\n";
        f << "delta-v = 1/256\n";
        f << "schemes = uniform\n";
    }

    fe2e_run* run = nullptr;
    REQUIRE(fe2e_run_create(&run) == FE2E_OK);
    REQUIRE(fe2e_run_load_file(run, cfg_path.string().c_str()) == FE2E_OK);
    REQUIRE(fe2e_run_set(run, "delta-v", "1/512") == FE2E_OK);
    REQUIRE(fe2e_run_set(run, "out", (dir / "qt").string().c_str()) == FE2E_OK);
    REQUIRE(fe2e_run_execute(run, "quant-table") == FE2E_OK);

    std::ifstream csv(dir / "qt" / "quant_table.csv");
    REQUIRE(csv.good());
    std::string header, row;
    std::getline(csv, header);
    std::getline(csv, row);
    // uniform @80m with delta_v = 1/512 halves the 0.15625 m error
    CHECK(row.find("0.078125") != std::string::npos);

    CHECK(fe2e_run_execute(run, "no-such-command") == FE2E_ERR_USAGE);
    fe2e_run_destroy(run);

    fe2e_run* run2 = nullptr;
    REQUIRE(fe2e_run_create(&run2) == FE2E_OK);
    CHECK(fe2e_run_load_file(run2, (dir / "missing.cfg").string().c_str()) == FE2E_ERR_IO);
    fe2e_run_destroy(run2);

    fs::remove_all(dir);
}
