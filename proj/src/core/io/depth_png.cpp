#include "depth_png.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "png.hpp"

namespace fe2e {

void write_depth_png16(const std::string& path, const GridD& depth, double scale) {
    if (!(scale > 0.0)) throw_usage("depth png scale must be positive");
    Grid<std::uint16_t> img(depth.width, depth.height, 0);
    for (std::size_t i = 0; i < depth.size(); ++i) {
        double v = std::round(depth.data[i] * scale);
        img.data[i] = static_cast<std::uint16_t>(std::min(65535.0, std::max(0.0, v)));
    }
    write_png_gray16(path, img);

    nlohmann::json j;
    j["scale"] = scale;
    j["width"] = depth.width;
    j["height"] = depth.height;
    j["units"] = "meters";
    std::ofstream f(path + ".json", std::ios::trunc);
    if (!f) throw_io("cannot write depth sidecar: " + path + ".json");
    f << j.dump(2) << "\n";
}

GridD read_depth_png16(const std::string& path, double* scale_out) {
    std::ifstream f(path + ".json");
    if (!f) throw_io("missing depth sidecar: " + path + ".json");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw_io("malformed depth sidecar " + path + ".json: " + e.what());
    }
    double scale = j.at("scale").get<double>();
    if (!(scale > 0.0)) throw_io("bad scale in depth sidecar: " + path + ".json");

    Grid<std::uint16_t> img = read_png_gray16(path);
    GridD depth(img.width, img.height, 0.0);
    for (std::size_t i = 0; i < img.size(); ++i) {
        depth.data[i] = static_cast<double>(img.data[i]) / scale;
    }
    if (scale_out) *scale_out = scale;
    return depth;
}

}  // namespace fe2e
