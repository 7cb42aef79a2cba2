#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "io/config.hpp"
#include "lab.hpp"

using namespace fe2e;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
    auto dir = fs::temp_directory_path() / "fe2e_lab_tests";
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

KeyValueConfig with_out(const fs::path& out) {
    KeyValueConfig cfg;
    cfg.set("out", out.string());
    return cfg;
}

}  // namespace

TEST_CASE("quant-table emits the headline table and scales with delta-v") {
    auto dir = work_dir() / "qt";
    fs::remove_all(dir);
    auto cfg = with_out(dir);
    run_command("quant-table", cfg);

    std::string table = slurp(dir / "quant_table.csv");
    CHECK(table.find("uniform,80,0.15625,0.001953125") != std::string::npos);
    CHECK(table.find("uniform,0.1,0.15625,1.5625") != std::string::npos);
    CHECK(table.find("inverse,80,124.84375") != std::string::npos);
    CHECK(table.find("logarithmic,80,1.044470582") != std::string::npos);
    CHECK(fs::exists(dir / "quant_sweep.csv"));
    CHECK(fs::exists(dir / "manifest.json"));

    // halving delta-v halves every uniform error exactly
    auto dir2 = work_dir() / "qt_half";
    fs::remove_all(dir2);
    auto cfg2 = with_out(dir2);
    cfg2.set("delta-v", "1/512");
    cfg2.set("schemes", "uniform");
    run_command("quant-table", cfg2);
    std::string half = slurp(dir2 / "quant_table.csv");
    CHECK(half.find("uniform,80,0.078125") != std::string::npos);

    // single-scheme selection
    CHECK(half.find("inverse") == std::string::npos);

    // byte-identical reruns
    auto dir3 = work_dir() / "qt_rerun";
    fs::remove_all(dir3);
    auto cfg3 = with_out(dir3);
    run_command("quant-table", cfg3);
    CHECK(slurp(dir3 / "quant_table.csv") == table);
    CHECK(slurp(dir3 / "quant_sweep.csv") == slurp(dir / "quant_sweep.csv"));
}

TEST_CASE("gen-data writes a loadable dataset and respects count=0") {
    auto dir = work_dir() / "gen0";
    fs::remove_all(dir);
    auto cfg = with_out(dir);
    cfg.set("count", "0");
    run_command("gen-data", cfg);
    nlohmann::json manifest;
    std::ifstream(dir / "manifest.json") >> manifest;
    CHECK(manifest.at("count").get<int>() == 0);

    auto dir2 = work_dir() / "gen4";
    fs::remove_all(dir2);
    auto cfg2 = with_out(dir2);
    cfg2.set("count", "4");
    cfg2.set("resolution", "16");
    cfg2.set("seed", "9");
    cfg2.set("png16", "on");
    run_command("gen-data", cfg2);
    CHECK(fs::exists(dir2 / "sample_00003_depth.pfm"));
    CHECK(fs::exists(dir2 / "sample_00003_depth16.png"));
    CHECK(fs::exists(dir2 / "sample_00003_depth16.png.json"));
    CHECK(fs::exists(dir2 / "run_manifest.json"));
}

TEST_CASE("train with epochs=0 checkpoints the initialization deterministically") {
    auto data_dir = work_dir() / "train_data";
    if (!fs::exists(data_dir / "manifest.json")) {
        auto gcfg = with_out(data_dir);
        gcfg.set("count", "8");
        gcfg.set("resolution", "16");
        gcfg.set("seed", "3");
        run_command("gen-data", gcfg);
    }

    auto run_train = [&](const fs::path& out) {
        auto cfg = with_out(out);
        cfg.set("data", data_dir.string());
        cfg.set("grid", "4");
        cfg.set("patch", "4");
        cfg.set("epochs", "0");
        cfg.set("seed", "5");
        run_command("train", cfg);
    };
    auto o1 = work_dir() / "train0_a";
    auto o2 = work_dir() / "train0_b";
    fs::remove_all(o1);
    fs::remove_all(o2);
    run_train(o1);
    run_train(o2);
    CHECK(slurp(o1 / "checkpoint.bin") == slurp(o2 / "checkpoint.bin"));

    nlohmann::json manifest;
    std::ifstream(o1 / "manifest.json") >> manifest;
    CHECK(manifest.at("model").at("arch") == "token");
    CHECK(manifest.at("config").at("epochs") == "0");
}

TEST_CASE("end-to-end: train then eval then field-plot") {
    auto data_dir = work_dir() / "e2e_data";
    if (!fs::exists(data_dir / "manifest.json")) {
        auto gcfg = with_out(data_dir);
        gcfg.set("count", "10");
        gcfg.set("resolution", "16");
        gcfg.set("seed", "17");
        run_command("gen-data", gcfg);
    }

    auto train_out = work_dir() / "e2e_train";
    fs::remove_all(train_out);
    auto tcfg = with_out(train_out);
    tcfg.set("data", data_dir.string());
    tcfg.set("grid", "4");
    tcfg.set("patch", "4");
    tcfg.set("joint", "on");
    tcfg.set("epochs", "2");
    tcfg.set("lr", "1e-3");
    run_command("train", tcfg);
    CHECK(fs::exists(train_out / "checkpoint.bin"));

    auto eval_out = work_dir() / "e2e_eval";
    fs::remove_all(eval_out);
    auto ecfg = with_out(eval_out);
    ecfg.set("checkpoint", (train_out / "checkpoint.bin").string());
    ecfg.set("data", data_dir.string());
    ecfg.set("seeds", "2");
    run_command("eval", ecfg);
    std::string metrics = slurp(eval_out / "metrics.csv");
    CHECK(metrics.find("absrel") != std::string::npos);
    nlohmann::json manifest;
    std::ifstream(eval_out / "manifest.json") >> manifest;
    CHECK(manifest.at("deterministic").get<bool>());  // cvfs inference

    // missing checkpoint is an io error
    auto bad = with_out(work_dir() / "e2e_bad");
    bad.set("checkpoint", (train_out / "nope.bin").string());
    bad.set("data", data_dir.string());
    bool io_raised = false;
    try {
        run_command("eval", bad);
    } catch (const LabError& e) {
        io_raised = e.status() == Status::Io;
    }
    CHECK(io_raised);

    auto fp_out = work_dir() / "e2e_fp";
    fs::remove_all(fp_out);
    auto fcfg = with_out(fp_out);
    fcfg.set("grid-n", "5");
    run_command("field-plot", fcfg);
    std::string field = slurp(fp_out / "field.csv");
    CHECK(field.find("z1,z2,t,v1,v2,panel") != std::string::npos);
    CHECK(fs::exists(fp_out / "field.svg"));

    // reruns are byte-identical without a timestamp
    auto fp_out2 = work_dir() / "e2e_fp2";
    fs::remove_all(fp_out2);
    auto fcfg2 = with_out(fp_out2);
    fcfg2.set("grid-n", "5");
    run_command("field-plot", fcfg2);
    CHECK(slurp(fp_out2 / "field.svg") == slurp(fp_out / "field.svg"));
    CHECK(slurp(fp_out2 / "field.csv") == field);
}

TEST_CASE("unknown command and bad flags raise usage errors") {
    KeyValueConfig cfg;
    bool usage = false;
    try {
        run_command("fit", cfg);
    } catch (const LabError& e) {
        usage = e.status() == Status::Usage;
    }
    CHECK(usage);

    auto bad = with_out(work_dir() / "bad_mix");
    bad.set("mix", "0.9,0.3");  // does not sum to 1
    usage = false;
    try {
        run_command("gen-data", bad);
    } catch (const LabError& e) {
        usage = e.status() == Status::Usage;
    }
    CHECK(usage);
}
