#include "png.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <vector>

namespace fe2e {

namespace {

const unsigned char kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

void put_u32_be(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

void write_chunk(std::ofstream& f, const char type[4], const std::vector<unsigned char>& data) {
    std::vector<unsigned char> buf;
    put_u32_be(buf, static_cast<std::uint32_t>(data.size()));
    buf.insert(buf.end(), type, type + 4);
    buf.insert(buf.end(), data.begin(), data.end());
    uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
    if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    put_u32_be(buf, static_cast<std::uint32_t>(crc));
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void write_png(const std::string& path, int width, int height, int bit_depth,
               const std::vector<unsigned char>& raster) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw_io("png: cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(kSignature), 8);

    std::vector<unsigned char> ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(width));
    put_u32_be(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(static_cast<unsigned char>(bit_depth));
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);  // deflate
    ihdr.push_back(0);  // default filtering
    ihdr.push_back(0);  // no interlace
    write_chunk(f, "IHDR", ihdr);

    uLongf bound = compressBound(static_cast<uLong>(raster.size()));
    std::vector<unsigned char> compressed(bound);
    if (compress2(compressed.data(), &bound, raster.data(), static_cast<uLong>(raster.size()),
                  Z_DEFAULT_COMPRESSION) != Z_OK) {
        throw_io("png: deflate failed for " + path);
    }
    compressed.resize(bound);
    write_chunk(f, "IDAT", compressed);
    write_chunk(f, "IEND", {});
    if (!f) throw_io("png: write failed: " + path);
}

struct PngImage {
    int width = 0;
    int height = 0;
    int bit_depth = 0;
    std::vector<unsigned char> raster;  // filter bytes stripped
};

std::uint32_t get_u32_be(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

PngImage read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw_io("png: cannot open: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0) {
        throw_io("png: bad signature in " + path);
    }

    PngImage img;
    std::vector<unsigned char> idat;
    std::size_t pos = 8;
    bool saw_end = false;
    while (pos + 12 <= bytes.size()) {
        std::uint32_t len = get_u32_be(&bytes[pos]);
        if (pos + 12 + len > bytes.size()) throw_io("png: truncated chunk in " + path);
        const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
        const unsigned char* data = &bytes[pos + 8];
        std::uint32_t expect_crc = get_u32_be(&bytes[pos + 8 + len]);
        uLong got_crc = crc32(0L, &bytes[pos + 4], 4);
        if (len) got_crc = crc32(got_crc, data, len);
        if (expect_crc != static_cast<std::uint32_t>(got_crc)) {
            throw_io("png: chunk crc mismatch in " + path);
        }

        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw_io("png: bad IHDR in " + path);
            img.width = static_cast<int>(get_u32_be(data));
            img.height = static_cast<int>(get_u32_be(data + 4));
            img.bit_depth = data[8];
            if (data[9] != 0) throw_io("png: only grayscale is supported: " + path);
            if (data[12] != 0) throw_io("png: interlaced files are not supported: " + path);
            if (img.bit_depth != 8 && img.bit_depth != 16) {
                throw_io("png: unsupported bit depth in " + path);
            }
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_end = true;
            break;
        }
        pos += 12 + len;
    }
    if (img.width <= 0 || img.height <= 0 || !saw_end) throw_io("png: malformed file: " + path);

    std::size_t bytes_per_px = img.bit_depth / 8;
    std::size_t stride = static_cast<std::size_t>(img.width) * bytes_per_px;
    uLongf raw_size = static_cast<uLongf>((stride + 1) * static_cast<std::size_t>(img.height));
    std::vector<unsigned char> raw(raw_size);
    if (uncompress(raw.data(), &raw_size, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_size != raw.size()) {
        throw_io("png: inflate failed for " + path);
    }

    img.raster.resize(stride * static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) {
        const unsigned char* row = &raw[static_cast<std::size_t>(y) * (stride + 1)];
        if (row[0] != 0) throw_io("png: unsupported filter type in " + path);
        std::memcpy(&img.raster[static_cast<std::size_t>(y) * stride], row + 1, stride);
    }
    return img;
}

}  // namespace

void write_png_gray8(const std::string& path, const Grid<std::uint8_t>& grid) {
    std::vector<unsigned char> raster;
    raster.reserve(static_cast<std::size_t>(grid.height) * (grid.width + 1));
    for (int y = 0; y < grid.height; ++y) {
        raster.push_back(0);  // filter: none
        for (int x = 0; x < grid.width; ++x) raster.push_back(grid.at(x, y));
    }
    write_png(path, grid.width, grid.height, 8, raster);
}

void write_png_gray16(const std::string& path, const Grid<std::uint16_t>& grid) {
    std::vector<unsigned char> raster;
    raster.reserve(static_cast<std::size_t>(grid.height) * (2 * grid.width + 1));
    for (int y = 0; y < grid.height; ++y) {
        raster.push_back(0);
        for (int x = 0; x < grid.width; ++x) {
            std::uint16_t v = grid.at(x, y);
            raster.push_back(static_cast<unsigned char>(v >> 8));  // big-endian samples
            raster.push_back(static_cast<unsigned char>(v));
        }
    }
    write_png(path, grid.width, grid.height, 16, raster);
}

Grid<std::uint8_t> read_png_gray8(const std::string& path) {
    PngImage img = read_png(path);
    if (img.bit_depth != 8) throw_io("png: expected 8-bit grayscale: " + path);
    Grid<std::uint8_t> grid(img.width, img.height, 0);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            grid.at(x, y) = img.raster[static_cast<std::size_t>(y) * img.width + x];
        }
    }
    return grid;
}

Grid<std::uint16_t> read_png_gray16(const std::string& path) {
    PngImage img = read_png(path);
    if (img.bit_depth != 16) throw_io("png: expected 16-bit grayscale: " + path);
    Grid<std::uint16_t> grid(img.width, img.height, 0);
    std::size_t stride = static_cast<std::size_t>(img.width) * 2;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const unsigned char* p = &img.raster[static_cast<std::size_t>(y) * stride + 2 * x];
            grid.at(x, y) = static_cast<std::uint16_t>((p[0] << 8) | p[1]);
        }
    }
    return grid;
}

std::uint32_t file_crc32(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw_io("crc32: cannot open: " + path);
    std::uint32_t crc = static_cast<std::uint32_t>(crc32(0L, nullptr, 0));
    char buf[65536];
    while (f) {
        f.read(buf, sizeof(buf));
        std::streamsize got = f.gcount();
        if (got > 0) {
            crc = static_cast<std::uint32_t>(
                crc32(crc, reinterpret_cast<const Bytef*>(buf), static_cast<uInt>(got)));
        }
    }
    return crc;
}

}  // namespace fe2e
