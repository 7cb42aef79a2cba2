#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "io/config.hpp"
#include "io/pfm.hpp"
#include "io/png.hpp"
#include "io/svg.hpp"
#include "rng.hpp"

using namespace fe2e;
namespace fs = std::filesystem;

namespace {

fs::path tmp_file(const std::string& name) { return fs::temp_directory_path() / name; }

}  // namespace

TEST_CASE("pfm grayscale round trip is exact at 32-bit precision") {
    Rng rng(301);
    GridD grid(17, 9, 0.0);
    for (auto& v : grid.data) v = rng.uniform(0.05, 90.0);
    auto path = tmp_file("fe2e_test.pfm");
    write_pfm(path.string(), grid);
    GridD back = read_pfm_gray(path.string());
    REQUIRE(back.width == 17);
    REQUIRE(back.height == 9);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK(back.data[i] == static_cast<double>(static_cast<float>(grid.data[i])));
    }
    fs::remove(path);
}

TEST_CASE("pfm 3-channel round trip preserves vectors") {
    Rng rng(302);
    GridV3 grid(6, 5);
    for (auto& v : grid.data) v = Vec3{rng.normal(), rng.normal(), rng.normal()}.normalized();
    auto path = tmp_file("fe2e_test_rgb.pfm");
    write_pfm(path.string(), grid);
    GridV3 back = read_pfm_rgb(path.string());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK(back.data[i].x == static_cast<double>(static_cast<float>(grid.data[i].x)));
        CHECK(back.data[i].y == static_cast<double>(static_cast<float>(grid.data[i].y)));
        CHECK(back.data[i].z == static_cast<double>(static_cast<float>(grid.data[i].z)));
    }
    // tag mismatch is an error
    CHECK_THROWS_AS(read_pfm_gray(path.string()), LabError);
    fs::remove(path);
}

TEST_CASE("png 8/16-bit round trips and integrity checks") {
    Rng rng(303);
    Grid<std::uint8_t> img8(23, 11, 0);
    for (auto& v : img8.data) v = static_cast<std::uint8_t>(rng.index(256));
    auto p8 = tmp_file("fe2e_test8.png");
    write_png_gray8(p8.string(), img8);
    auto back8 = read_png_gray8(p8.string());
    CHECK(back8.data == img8.data);

    Grid<std::uint16_t> img16(9, 14, 0);
    for (auto& v : img16.data) v = static_cast<std::uint16_t>(rng.index(65536));
    auto p16 = tmp_file("fe2e_test16.png");
    write_png_gray16(p16.string(), img16);
    auto back16 = read_png_gray16(p16.string());
    CHECK(back16.data == img16.data);
    CHECK_THROWS_AS(read_png_gray8(p16.string()), LabError);  // depth mismatch

    // corrupting one raster byte breaks the chunk crc
    {
        std::fstream f(p8, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(60);
        char c;
        f.seekg(60);
        f.get(c);
        f.seekp(60);
        f.put(static_cast<char>(c ^ 0x5A));
    }
    CHECK_THROWS_AS(read_png_gray8(p8.string()), LabError);
    fs::remove(p8);
    fs::remove(p16);
}

TEST_CASE("key=value config: comments, precedence, parse errors") {
    auto path = tmp_file("fe2e_test.cfg");
    {
        std::ofstream f(path);
        f << "# comment line\n";
        f << "epochs = 12\n";
        f << "objective=cvfs   # trailing comment\n";
        f << "lr = 5e-3\n";
        f << "joint = on\n";
        f << "\n";
    }
    KeyValueConfig cfg;
    cfg.load_file(path.string());
    CHECK(cfg.get_int("epochs", 0) == 12);
    CHECK(cfg.get_string("objective", "") == "cvfs");
    CHECK(cfg.get_double("lr", 0.0) == 5e-3);
    CHECK(cfg.get_bool("joint", false));
    CHECK(cfg.get_int("missing", 7) == 7);

    cfg.set("epochs", "50");  // flags override file values
    CHECK(cfg.get_int("epochs", 0) == 50);

    cfg.set("epochs", "abc");
    CHECK_THROWS_AS(cfg.get_int("epochs", 0), LabError);

    {
        std::ofstream f(path);
        f << "no_equals_sign\n";
    }
    KeyValueConfig bad;
    CHECK_THROWS_AS(bad.load_file(path.string()), LabError);
    fs::remove(path);
}

TEST_CASE("fraction parsing") {
    CHECK(parse_fraction("1/256") == 1.0 / 256.0);
    CHECK(parse_fraction("1/512") == 1.0 / 512.0);
    CHECK(parse_fraction("0.0039") == 0.0039);
    CHECK_THROWS_AS(parse_fraction("1/0"), LabError);
    CHECK_THROWS_AS(parse_fraction("abc"), LabError);
}

TEST_CASE("svg writer emits deterministic markup") {
    SvgWriter svg(200, 200);
    svg.set_viewport(-1, 1, -1, 1);
    svg.axes();
    svg.arrow(0.0, 0.0, 0.3, 0.2, "#3366cc");
    svg.circle(0.5, 0.5, 3.0, "#cc0000");
    svg.polyline({{-0.5, -0.5}, {0.0, 0.2}, {0.5, -0.1}}, "#00aa00");
    auto path = tmp_file("fe2e_test.svg");
    svg.save(path.string());

    std::ifstream f(path);
    std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(content.find("<svg") != std::string::npos);
    CHECK(content.find("<line") != std::string::npos);
    CHECK(content.find("<circle") != std::string::npos);
    CHECK(content.find("</svg>") != std::string::npos);
    fs::remove(path);
}
