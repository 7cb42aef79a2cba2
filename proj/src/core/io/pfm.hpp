#pragma once

#include <string>

#include "../grid.hpp"

namespace fe2e {

// Portable float map, 32-bit little-endian ("Pf" grayscale / "PF" 3-channel),
// negative scale marks little-endian, rows stored bottom to top.
void write_pfm(const std::string& path, const GridD& grid);
void write_pfm(const std::string& path, const GridV3& grid);

GridD read_pfm_gray(const std::string& path);
GridV3 read_pfm_rgb(const std::string& path);

}  // namespace fe2e
