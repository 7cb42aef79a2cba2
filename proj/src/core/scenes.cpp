#include "scenes.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include <json.hpp>

#include "io/pfm.hpp"
#include "io/png.hpp"

namespace fe2e {

namespace {

constexpr double kSlopeMax = 1.5;  // steeper pixels count as silhouette zone
const Vec3 kLight = Vec3{0.4, 0.3, 0.85}.normalized();

struct Hit {
    bool hit = false;
    double depth = 0.0;
    Vec3 normal;
};

using Surface = std::function<Hit(double x, double y)>;

double signed_mag(Rng& rng, double lo, double hi) {
    double v = rng.uniform(lo, hi);
    return rng.bernoulli(0.5) ? v : -v;
}

Surface tilted_plane(double a, double b, double c) {
    return [=](double x, double y) {
        Hit h;
        h.hit = true;
        h.depth = c + a * x + b * y;
        h.normal = Vec3{-a, -b, 1.0}.normalized();
        return h;
    };
}

Surface sphere(double cx, double cy, double cz, double r) {
    return [=](double x, double y) {
        Hit h;
        double dx = x - cx, dy = y - cy;
        double rho2 = dx * dx + dy * dy;
        if (rho2 >= r * r) return h;
        double s = std::sqrt(r * r - rho2);
        h.hit = true;
        h.depth = cz - s;                      // front surface
        h.normal = Vec3{-dx / r, -dy / r, s / r};  // exactly unit length
        return h;
    };
}

// One face of a roof wedge: a plane strip on one side of the ridge. A small
// slope along the ridge keeps per-column depths distinct.
Surface wedge_face(double x0, double half_width, double ridge_depth, double slope, double y_slope,
                   bool left) {
    return [=](double x, double y) {
        Hit h;
        double dx = x - x0;
        bool inside = left ? (dx >= -half_width && dx <= 0.0) : (dx > 0.0 && dx <= half_width);
        if (!inside) return h;
        h.hit = true;
        h.depth = ridge_depth + slope * std::fabs(dx) + y_slope * y;
        double a = left ? -slope : slope;
        h.normal = Vec3{-a, -y_slope, 1.0}.normalized();
        return h;
    };
}

// Near-fronto rectangular slab (outdoor "box" front face). A slight tilt
// keeps the depth distribution continuous, like real structures.
Surface box_face(double x0, double x1, double y0, double y1, double d, double a, double b) {
    double cx = (x0 + x1) / 2.0, cy = (y0 + y1) / 2.0;
    return [=](double x, double y) {
        Hit h;
        if (x < x0 || x > x1 || y < y0 || y > y1) return h;
        h.hit = true;
        h.depth = d + a * (x - cx) + b * (y - cy);
        h.normal = Vec3{-a, -b, 1.0}.normalized();
        return h;
    };
}

struct SceneRecipe {
    std::vector<Surface> surfaces;
    double extent = 4.0;  // lateral span in meters
};

SceneRecipe indoor_recipe(PrimitiveKind kind, Rng& rng) {
    SceneRecipe recipe;
    recipe.extent = 4.0;
    auto add_background = [&] {
        // tilt magnitudes bounded away from zero keep the depth histogram spread
        recipe.surfaces.push_back(tilted_plane(signed_mag(rng, 0.1, 0.3), signed_mag(rng, 0.1, 0.3),
                                               rng.uniform(6.0, 9.0)));
    };
    auto add_sphere = [&] {
        recipe.surfaces.push_back(sphere(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                                         rng.uniform(2.0, 4.5), rng.uniform(0.6, 1.1)));
    };
    auto add_wedge = [&] {
        double x0 = rng.uniform(-1.0, 1.0);
        double w = rng.uniform(0.5, 1.2);
        double ridge = rng.uniform(2.0, 5.0);
        double slope = rng.uniform(0.3, 1.0);
        double y_slope = signed_mag(rng, 0.08, 0.2);
        recipe.surfaces.push_back(wedge_face(x0, w, ridge, slope, y_slope, true));
        recipe.surfaces.push_back(wedge_face(x0, w, ridge, slope, y_slope, false));
    };
    switch (kind) {
        case PrimitiveKind::Plane:
            // fronto-parallel reference plane
            recipe.surfaces.push_back(tilted_plane(0.0, 0.0, rng.uniform(2.0, 8.0)));
            break;
        case PrimitiveKind::Sphere:
            add_background();
            add_sphere();
            break;
        case PrimitiveKind::Wedge:
            add_background();
            add_wedge();
            break;
        case PrimitiveKind::Composite:
            add_background();
            add_sphere();
            if (rng.bernoulli(0.5)) add_sphere();
            add_wedge();
            break;
    }
    return recipe;
}

SceneRecipe outdoor_recipe(PrimitiveKind kind, Rng& rng) {
    SceneRecipe recipe;
    recipe.extent = 60.0;
    // ground plane spanning near range to the 80 m cap, banked slightly in x
    double b = rng.uniform(1.0, 1.12);
    double c = rng.uniform(40.0, 44.0);
    double a = signed_mag(rng, 0.015, 0.03);
    recipe.surfaces.push_back(tilted_plane(a, -b, c));
    if (kind == PrimitiveKind::Plane) return recipe;
    int boxes = 2 + static_cast<int>(rng.index(3));
    for (int i = 0; i < boxes; ++i) {
        double hw = rng.uniform(3.0, 8.0);
        double hh = rng.uniform(3.0, 8.0);
        double px = rng.uniform(-20.0, 20.0);
        double py = rng.uniform(-20.0, 20.0);
        recipe.surfaces.push_back(box_face(px - hw, px + hw, py - hh, py + hh,
                                           rng.uniform(8.0, 70.0), signed_mag(rng, 0.05, 0.12),
                                           signed_mag(rng, 0.05, 0.12)));
    }
    return recipe;
}

}  // namespace

const char* pool_kind_name(PoolKind kind) {
    return kind == PoolKind::IndoorLike ? "indoor_like" : "outdoor_like";
}

PrimitiveKind primitive_from_name(const std::string& name) {
    if (name == "plane") return PrimitiveKind::Plane;
    if (name == "sphere") return PrimitiveKind::Sphere;
    if (name == "wedge") return PrimitiveKind::Wedge;
    if (name == "composite") return PrimitiveKind::Composite;
    throw_usage("unknown primitive '" + name + "' (expected plane|sphere|wedge|composite)");
}

SceneSample generate_scene(PrimitiveKind kind, int resolution, std::uint64_t seed, PoolKind pool) {
    if (resolution < 8) throw_numeric("scene resolution must be >= 8");
    Rng rng(Rng::derive(seed, 0x5CE11E));
    SceneRecipe recipe = pool == PoolKind::IndoorLike ? indoor_recipe(kind, rng)
                                                      : outdoor_recipe(kind, rng);

    SceneSample sample;
    sample.pool = pool;
    sample.meters_per_pixel = recipe.extent / resolution;
    sample.image_proxy = GridD(resolution, resolution, 0.0);
    sample.depth = GridD(resolution, resolution, 0.0);
    sample.normals = GridV3(resolution, resolution);
    sample.valid = GridMask(resolution, resolution, 0);

    Grid<int> winner(resolution, resolution, -1);
    for (int py = 0; py < resolution; ++py) {
        for (int px = 0; px < resolution; ++px) {
            // pixel centers; +y up in camera coordinates
            double x = (px + 0.5) / resolution * recipe.extent - recipe.extent / 2.0;
            double y = recipe.extent / 2.0 - (py + 0.5) / resolution * recipe.extent;
            double best = 1e300;
            int best_id = -1;
            Vec3 normal{0.0, 0.0, 1.0};
            for (std::size_t s = 0; s < recipe.surfaces.size(); ++s) {
                Hit h = recipe.surfaces[s](x, y);
                if (h.hit && h.depth < best) {
                    best = h.depth;
                    best_id = static_cast<int>(s);
                    normal = h.normal;
                }
            }
            if (best_id < 0) continue;  // composites always include full-cover surfaces
            winner.at(px, py) = best_id;
            sample.depth.at(px, py) = best;
            sample.normals.at(px, py) = normal;
            double lambert = std::max(0.0, std::min(1.0, normal.dot(kLight)));
            sample.image_proxy.at(px, py) = std::round(lambert * 255.0) / 255.0;

            bool in_range = best >= kSceneDepthMin && best <= kSceneDepthMax;
            double slope = std::hypot(normal.x, normal.y) / std::max(1e-12, normal.z);
            sample.valid.at(px, py) = (in_range && slope <= kSlopeMax) ? 1 : 0;
        }
    }

    // discontinuity hygiene: mask out pixels whose winning surface differs
    // from any 4-neighbor
    GridMask hygiene = sample.valid;
    for (int py = 0; py < resolution; ++py) {
        for (int px = 0; px < resolution; ++px) {
            int id = winner.at(px, py);
            auto differs = [&](int nx, int ny) {
                return nx >= 0 && ny >= 0 && nx < resolution && ny < resolution &&
                       winner.at(nx, ny) != id;
            };
            if (differs(px - 1, py) || differs(px + 1, py) || differs(px, py - 1) ||
                differs(px, py + 1)) {
                hygiene.at(px, py) = 0;
            }
        }
    }
    sample.valid = hygiene;
    return sample;
}

std::vector<SceneSample> generate_pool(PoolKind pool, int count, int resolution,
                                       std::uint64_t seed) {
    std::vector<SceneSample> samples;
    samples.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        samples.push_back(generate_scene(PrimitiveKind::Composite, resolution,
                                         Rng::derive(seed, static_cast<std::uint64_t>(i)), pool));
    }
    return samples;
}

std::vector<std::pair<int, int>> sample_batch_refs(const std::vector<SceneSample>& indoor,
                                                   const std::vector<SceneSample>& outdoor,
                                                   int batch_size, double mix_indoor, Rng& rng) {
    if (indoor.empty() || outdoor.empty()) throw_numeric("sample_batch requires both pools nonempty");
    std::vector<std::pair<int, int>> refs;
    refs.reserve(static_cast<std::size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        if (rng.bernoulli(mix_indoor)) {
            refs.emplace_back(0, static_cast<int>(rng.index(indoor.size())));
        } else {
            refs.emplace_back(1, static_cast<int>(rng.index(outdoor.size())));
        }
    }
    return refs;
}

FdNormals finite_difference_normals(const GridD& depth, const GridMask& valid,
                                    double meters_per_pixel) {
    if (!(meters_per_pixel > 0.0)) throw_numeric("finite_difference_normals: bad pixel pitch");
    FdNormals out;
    out.normals = GridV3(depth.width, depth.height);
    out.valid = GridMask(depth.width, depth.height, 0);
    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x) {
            if (x == 0 || y == 0 || x == depth.width - 1 || y == depth.height - 1) continue;
            if (!valid.at(x, y) || !valid.at(x - 1, y) || !valid.at(x + 1, y) ||
                !valid.at(x, y - 1) || !valid.at(x, y + 1)) {
                continue;
            }
            double ddx = (depth.at(x + 1, y) - depth.at(x - 1, y)) / (2.0 * meters_per_pixel);
            // +y in camera coordinates points up, but rows scan downward
            double ddy = (depth.at(x, y - 1) - depth.at(x, y + 1)) / (2.0 * meters_per_pixel);
            out.normals.at(x, y) = Vec3{-ddx, -ddy, 1.0}.normalized();
            out.valid.at(x, y) = 1;
        }
    }
    return out;
}

std::vector<SceneSample> generate_mixed_dataset(int count, int resolution, double mix_indoor,
                                                std::uint64_t seed) {
    if (count < 0) throw_usage("dataset count must be >= 0");
    if (!(mix_indoor >= 0.0 && mix_indoor <= 1.0)) throw_usage("mix probability must be in [0,1]");
    Rng pool_rng(Rng::derive(seed, 0x9001));
    std::vector<SceneSample> samples;
    samples.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        PoolKind pool = pool_rng.bernoulli(mix_indoor) ? PoolKind::IndoorLike : PoolKind::OutdoorLike;
        samples.push_back(generate_scene(PrimitiveKind::Composite, resolution,
                                         Rng::derive(seed, static_cast<std::uint64_t>(i)), pool));
    }
    return samples;
}

namespace {

std::string sample_stem(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%05d", index);
    return buf;
}

Grid<std::uint8_t> proxy_to_png(const GridD& proxy) {
    Grid<std::uint8_t> img(proxy.width, proxy.height, 0);
    for (std::size_t i = 0; i < proxy.size(); ++i) {
        double v = std::min(1.0, std::max(0.0, proxy.data[i]));
        img.data[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return img;
}

Grid<std::uint8_t> mask_to_png(const GridMask& mask) {
    Grid<std::uint8_t> img(mask.width, mask.height, 0);
    for (std::size_t i = 0; i < mask.size(); ++i) img.data[i] = mask.data[i] ? 255 : 0;
    return img;
}

}  // namespace

DatasetManifest save_dataset(const std::vector<SceneSample>& samples, const std::string& dir,
                             std::uint64_t seed, double mix_indoor) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw_io("cannot create dataset directory: " + dir);

    DatasetManifest manifest;
    manifest.seed = seed;
    manifest.count = static_cast<int>(samples.size());
    manifest.resolution = samples.empty() ? 0 : samples[0].depth.width;
    manifest.mix_indoor = mix_indoor;
    manifest.mix_outdoor = 1.0 - mix_indoor;

    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        std::string stem = sample_stem(static_cast<int>(i));
        std::map<std::string, std::uint32_t> crcs;

        std::string depth_file = stem + "_depth.pfm";
        write_pfm(dir + "/" + depth_file, s.depth);
        crcs[depth_file] = file_crc32(dir + "/" + depth_file);

        std::string normal_file = stem + "_normals.pfm";
        write_pfm(dir + "/" + normal_file, s.normals);
        crcs[normal_file] = file_crc32(dir + "/" + normal_file);

        std::string proxy_file = stem + "_proxy.png";
        write_png_gray8(dir + "/" + proxy_file, proxy_to_png(s.image_proxy));
        crcs[proxy_file] = file_crc32(dir + "/" + proxy_file);

        std::string mask_file = stem + "_mask.png";
        write_png_gray8(dir + "/" + mask_file, mask_to_png(s.valid));
        crcs[mask_file] = file_crc32(dir + "/" + mask_file);

        manifest.pools.push_back(pool_kind_name(s.pool));
        manifest.meters_per_pixel.push_back(s.meters_per_pixel);
        manifest.checksums.push_back(std::move(crcs));
    }

    nlohmann::json j;
    j["format_version"] = 1;
    j["seed"] = manifest.seed;
    j["count"] = manifest.count;
    j["resolution"] = manifest.resolution;
    j["mix"] = {manifest.mix_indoor, manifest.mix_outdoor};
    j["normal_convention"] = manifest.normal_convention;
    j["pools"] = manifest.pools;
    j["meters_per_pixel"] = manifest.meters_per_pixel;
    nlohmann::json files = nlohmann::json::array();
    for (const auto& crcs : manifest.checksums) {
        nlohmann::json entry;
        for (const auto& [name, crc] : crcs) entry[name] = crc;
        files.push_back(entry);
    }
    j["files"] = files;

    std::ofstream out(dir + "/manifest.json", std::ios::trunc);
    if (!out) throw_io("cannot write manifest in " + dir);
    out << j.dump(2) << "\n";
    return manifest;
}

std::vector<SceneSample> load_dataset(const std::string& dir, DatasetManifest* manifest_out) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw_io("cannot open dataset manifest in " + dir);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw_io("malformed dataset manifest in " + dir + ": " + e.what());
    }

    DatasetManifest manifest;
    try {
        manifest.seed = j.at("seed").get<std::uint64_t>();
        manifest.count = j.at("count").get<int>();
        manifest.resolution = j.at("resolution").get<int>();
        manifest.mix_indoor = j.at("mix")[0].get<double>();
        manifest.mix_outdoor = j.at("mix")[1].get<double>();
        manifest.pools = j.at("pools").get<std::vector<std::string>>();
        manifest.meters_per_pixel = j.at("meters_per_pixel").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw_io("dataset manifest in " + dir + " is missing fields: " + e.what());
    }

    std::vector<SceneSample> samples;
    samples.reserve(static_cast<std::size_t>(manifest.count));
    for (int i = 0; i < manifest.count; ++i) {
        const auto& entry = j.at("files")[static_cast<std::size_t>(i)];
        std::map<std::string, std::uint32_t> crcs;
        for (auto it = entry.begin(); it != entry.end(); ++it) {
            std::string path = dir + "/" + it.key();
            std::uint32_t expect = it.value().get<std::uint32_t>();
            std::uint32_t got = file_crc32(path);
            if (expect != got) throw_io("dataset checksum mismatch for " + path);
            crcs[it.key()] = expect;
        }
        manifest.checksums.push_back(crcs);

        std::string stem = sample_stem(i);
        SceneSample s;
        s.depth = read_pfm_gray(dir + "/" + stem + "_depth.pfm");
        s.normals = read_pfm_rgb(dir + "/" + stem + "_normals.pfm");
        auto proxy = read_png_gray8(dir + "/" + stem + "_proxy.png");
        s.image_proxy = GridD(proxy.width, proxy.height, 0.0);
        for (std::size_t k = 0; k < proxy.size(); ++k) {
            s.image_proxy.data[k] = static_cast<double>(proxy.data[k]) / 255.0;
        }
        auto mask = read_png_gray8(dir + "/" + stem + "_mask.png");
        s.valid = GridMask(mask.width, mask.height, 0);
        for (std::size_t k = 0; k < mask.size(); ++k) s.valid.data[k] = mask.data[k] ? 1 : 0;
        s.pool = manifest.pools[static_cast<std::size_t>(i)] == "indoor_like"
                     ? PoolKind::IndoorLike
                     : PoolKind::OutdoorLike;
        s.meters_per_pixel = manifest.meters_per_pixel[static_cast<std::size_t>(i)];
        samples.push_back(std::move(s));
    }
    if (manifest_out) *manifest_out = manifest;
    return samples;
}

}  // namespace fe2e
