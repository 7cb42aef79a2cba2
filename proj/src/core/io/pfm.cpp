#include "pfm.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <vector>

namespace fe2e {

namespace {

void write_float_le(std::ofstream& f, float v) {
    auto u = std::bit_cast<std::uint32_t>(v);
    unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                          static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

float read_float_le(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw_io("pfm: unexpected end of file");
    std::uint32_t u = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                      (static_cast<std::uint32_t>(b[2]) << 16) |
                      (static_cast<std::uint32_t>(b[3]) << 24);
    return std::bit_cast<float>(u);
}

void write_header(std::ofstream& f, const char* tag, int w, int h) {
    f << tag << "\n" << w << " " << h << "\n" << "-1.0" << "\n";
}

struct PfmHeader {
    std::string tag;
    int width = 0;
    int height = 0;
    double scale = 0.0;
};

PfmHeader read_header(std::ifstream& f, const std::string& path) {
    PfmHeader h;
    f >> h.tag >> h.width >> h.height >> h.scale;
    if (!f || h.width <= 0 || h.height <= 0) throw_io("pfm: malformed header in " + path);
    if (h.scale >= 0.0) throw_io("pfm: big-endian files are not supported: " + path);
    f.get();  // single whitespace byte terminating the header
    return h;
}

}  // namespace

void write_pfm(const std::string& path, const GridD& grid) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw_io("pfm: cannot open for writing: " + path);
    write_header(f, "Pf", grid.width, grid.height);
    for (int y = grid.height - 1; y >= 0; --y) {  // bottom-to-top
        for (int x = 0; x < grid.width; ++x) {
            write_float_le(f, static_cast<float>(grid.at(x, y)));
        }
    }
    if (!f) throw_io("pfm: write failed: " + path);
}

void write_pfm(const std::string& path, const GridV3& grid) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw_io("pfm: cannot open for writing: " + path);
    write_header(f, "PF", grid.width, grid.height);
    for (int y = grid.height - 1; y >= 0; --y) {
        for (int x = 0; x < grid.width; ++x) {
            const Vec3& v = grid.at(x, y);
            write_float_le(f, static_cast<float>(v.x));
            write_float_le(f, static_cast<float>(v.y));
            write_float_le(f, static_cast<float>(v.z));
        }
    }
    if (!f) throw_io("pfm: write failed: " + path);
}

GridD read_pfm_gray(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw_io("pfm: cannot open: " + path);
    PfmHeader h = read_header(f, path);
    if (h.tag != "Pf") throw_io("pfm: expected grayscale 'Pf' in " + path);
    GridD grid(h.width, h.height, 0.0);
    for (int y = h.height - 1; y >= 0; --y) {
        for (int x = 0; x < h.width; ++x) grid.at(x, y) = read_float_le(f);
    }
    return grid;
}

GridV3 read_pfm_rgb(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw_io("pfm: cannot open: " + path);
    PfmHeader h = read_header(f, path);
    if (h.tag != "PF") throw_io("pfm: expected 3-channel 'PF' in " + path);
    GridV3 grid(h.width, h.height);
    for (int y = h.height - 1; y >= 0; --y) {
        for (int x = 0; x < h.width; ++x) {
            Vec3 v;
            v.x = read_float_le(f);
            v.y = read_float_le(f);
            v.z = read_float_le(f);
            grid.at(x, y) = v;
        }
    }
    return grid;
}

}  // namespace fe2e
