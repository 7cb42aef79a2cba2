#pragma once

#include <cstdint>
#include <string>

#include "../grid.hpp"

namespace fe2e {

// Minimal grayscale PNG writer/reader (color type 0, bit depth 8 or 16,
// filter 0 scanlines, zlib-compressed). Enough for proxies, masks and
// 16-bit quantized depth; not a general PNG implementation.
void write_png_gray8(const std::string& path, const Grid<std::uint8_t>& grid);
void write_png_gray16(const std::string& path, const Grid<std::uint16_t>& grid);

Grid<std::uint8_t> read_png_gray8(const std::string& path);
Grid<std::uint16_t> read_png_gray16(const std::string& path);

// CRC-32 of a whole file, used for manifest checksums.
std::uint32_t file_crc32(const std::string& path);

}  // namespace fe2e
