#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "grid.hpp"
#include "rng.hpp"

namespace fe2e {

enum class PoolKind { IndoorLike, OutdoorLike };
enum class PrimitiveKind { Plane, Sphere, Wedge, Composite };

const char* pool_kind_name(PoolKind kind);
PrimitiveKind primitive_from_name(const std::string& name);

// One rendered scene under orthographic projection: depth in meters, analytic
// unit normals in the camera frame (+z toward the viewer), Lambert shading as
// the image proxy, and a validity mask excluding discontinuities, silhouette
// zones and out-of-range depths.
struct SceneSample {
    GridD image_proxy;      // 8-bit-quantized shading stored as [0,1]
    GridD depth;            // meters
    GridV3 normals;
    GridMask valid;
    PoolKind pool = PoolKind::IndoorLike;
    double meters_per_pixel = 0.0;
};

// Depth bounds shared by all generated scenes.
constexpr double kSceneDepthMin = 0.1;
constexpr double kSceneDepthMax = 80.0;

SceneSample generate_scene(PrimitiveKind kind, int resolution, std::uint64_t seed,
                           PoolKind pool = PoolKind::IndoorLike);

// A pool of composite scenes with per-sample derived seeds.
std::vector<SceneSample> generate_pool(PoolKind pool, int count, int resolution,
                                       std::uint64_t seed);

// Independent per-element pool choice: P(IndoorLike) = mix_indoor. Returns
// (pool_index, sample_index) pairs into the two pools.
std::vector<std::pair<int, int>> sample_batch_refs(const std::vector<SceneSample>& indoor,
                                                   const std::vector<SceneSample>& outdoor,
                                                   int batch_size, double mix_indoor, Rng& rng);

struct FdNormals {
    GridV3 normals;
    GridMask valid;  // pixels with a full central-difference stencil
};

// Central-difference normals from the depth grid; the oracle side of the
// depth-normal consistency contract.
FdNormals finite_difference_normals(const GridD& depth, const GridMask& valid,
                                    double meters_per_pixel);

struct DatasetManifest {
    std::uint64_t seed = 0;
    int count = 0;
    int resolution = 0;
    double mix_indoor = 0.9;
    double mix_outdoor = 0.1;
    std::string normal_convention = "camera-frame, +z toward viewer, PF channels in [-1,1]";
    std::vector<std::string> pools;               // per sample
    std::vector<double> meters_per_pixel;         // per sample
    std::vector<std::map<std::string, std::uint32_t>> checksums;  // file -> crc32
};

// Mixed dataset generation: per-sample Bernoulli pool choice at mix_indoor.
std::vector<SceneSample> generate_mixed_dataset(int count, int resolution, double mix_indoor,
                                                std::uint64_t seed);

// PFM depth, PF normals, PNG proxy/mask plus a JSON manifest with checksums.
DatasetManifest save_dataset(const std::vector<SceneSample>& samples, const std::string& dir,
                             std::uint64_t seed, double mix_indoor);
std::vector<SceneSample> load_dataset(const std::string& dir, DatasetManifest* manifest_out = nullptr);

}  // namespace fe2e
