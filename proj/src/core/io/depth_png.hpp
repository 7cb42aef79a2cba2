#pragma once

#include <string>

#include "../grid.hpp"

namespace fe2e {

// 16-bit grayscale PNG depth storage with the scale factor recorded in a
// sidecar JSON ("<path>.json"): stored = round(depth * scale), clamped to
// [0, 65535]; reading divides back.
void write_depth_png16(const std::string& path, const GridD& depth, double scale);
GridD read_depth_png16(const std::string& path, double* scale_out = nullptr);

}  // namespace fe2e
