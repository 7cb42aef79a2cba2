#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "depth_codec.hpp"
#include "metrics.hpp"
#include "scenes.hpp"

using namespace fe2e;
namespace fs = std::filesystem;

namespace {

GridMask intersect(const GridMask& a, const GridMask& b) {
    GridMask out(a.width, a.height, 0);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = (a.data[i] && b.data[i]) ? 1 : 0;
    return out;
}

double fd_consistency_deg(const SceneSample& s) {
    FdNormals fd = finite_difference_normals(s.depth, s.valid, s.meters_per_pixel);
    GridMask both = intersect(fd.valid, s.valid);
    return mean_angular_error(fd.normals, s.normals, both);
}

}  // namespace

TEST_CASE("fronto-parallel plane scene: constant depth, normals straight up") {
    SceneSample s = generate_scene(PrimitiveKind::Plane, 32, 11, PoolKind::IndoorLike);
    double d0 = s.depth.at(0, 0);
    CHECK(d0 > kSceneDepthMin);
    CHECK(d0 < kSceneDepthMax);
    for (std::size_t i = 0; i < s.depth.size(); ++i) {
        CHECK(s.depth.data[i] == d0);
        CHECK(s.normals.data[i].z == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(s.valid.data[i] == 1);
    }
}

TEST_CASE("wedge scene: finite-difference normals are exact on planar faces") {
    for (std::uint64_t seed : {1ULL, 5ULL, 9ULL}) {
        SceneSample s = generate_scene(PrimitiveKind::Wedge, 64, seed, PoolKind::IndoorLike);
        FdNormals fd = finite_difference_normals(s.depth, s.valid, s.meters_per_pixel);
        GridMask both = intersect(fd.valid, s.valid);
        int checked = 0;
        for (int y = 0; y < 64; ++y) {
            for (int x = 0; x < 64; ++x) {
                if (!both.at(x, y)) continue;
                const Vec3& a = fd.normals.at(x, y);
                const Vec3& b = s.normals.at(x, y);
                CHECK(std::fabs(a.x - b.x) < 1e-6);
                CHECK(std::fabs(a.y - b.y) < 1e-6);
                CHECK(std::fabs(a.z - b.z) < 1e-6);
                ++checked;
            }
        }
        CHECK(checked > 1000);
    }
}

TEST_CASE("sphere scene: apex points at the camera, silhouette nears 90 degrees") {
    SceneSample s = generate_scene(PrimitiveKind::Sphere, 64, 3, PoolKind::IndoorLike);
    // apex = nearest pixel of the scene
    std::size_t apex = 0;
    double best = 1e300;
    double min_nz = 1.0;
    for (std::size_t i = 0; i < s.depth.size(); ++i) {
        if (s.depth.data[i] < best) {
            best = s.depth.data[i];
            apex = i;
        }
        min_nz = std::min(min_nz, s.normals.data[i].z);
    }
    CHECK(s.normals.data[apex].z > 0.995);
    CHECK(min_nz < 0.35);  // rim pixels approach the view plane

    // steep silhouette pixels are masked out
    for (std::size_t i = 0; i < s.valid.size(); ++i) {
        const Vec3& n = s.normals.data[i];
        double slope = std::hypot(n.x, n.y) / std::max(1e-12, n.z);
        if (slope > 1.5) CHECK(s.valid.data[i] == 0);
    }
}

TEST_CASE("depth stays in range and outdoor scenes reach far depths") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        SceneSample in = generate_scene(PrimitiveKind::Composite, 32, seed, PoolKind::IndoorLike);
        SceneSample out = generate_scene(PrimitiveKind::Composite, 32, seed, PoolKind::OutdoorLike);
        double out_max = 0.0;
        for (std::size_t i = 0; i < in.valid.size(); ++i) {
            if (in.valid.data[i]) {
                CHECK(in.depth.data[i] >= kSceneDepthMin);
                CHECK(in.depth.data[i] <= kSceneDepthMax);
            }
            if (out.valid.data[i]) {
                CHECK(out.depth.data[i] >= kSceneDepthMin);
                CHECK(out.depth.data[i] <= kSceneDepthMax);
                out_max = std::max(out_max, out.depth.data[i]);
            }
        }
        CHECK(out_max > 60.0);
    }
}

TEST_CASE("depth-normal consistency tightens with resolution") {
    for (std::uint64_t seed : {2ULL, 7ULL, 13ULL}) {
        SceneSample coarse = generate_scene(PrimitiveKind::Composite, 32, seed, PoolKind::IndoorLike);
        CHECK(fd_consistency_deg(coarse) < 2.0);
        SceneSample fine = generate_scene(PrimitiveKind::Composite, 128, seed, PoolKind::IndoorLike);
        CHECK(fd_consistency_deg(fine) < 0.5);
    }
    SceneSample outdoor = generate_scene(PrimitiveKind::Composite, 128, 4, PoolKind::OutdoorLike);
    CHECK(fd_consistency_deg(outdoor) < 0.5);
}

TEST_CASE("percentile label pipeline composes with generated scenes") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        SceneSample s = generate_scene(PrimitiveKind::Composite, 64, seed,
                                       seed % 2 ? PoolKind::OutdoorLike : PoolKind::IndoorLike);
        NormalizedLabel label = percentile_normalize(s.depth, s.valid);
        int valid_count = 0, inside = 0, at_low = 0, at_high = 0;
        for (std::size_t i = 0; i < label.values.size(); ++i) {
            if (!label.valid.data[i]) continue;
            ++valid_count;
            CHECK(label.values.data[i] >= -1.0);
            CHECK(label.values.data[i] <= 1.0);
            if (std::fabs(label.values.data[i]) < 1.0) {
                ++inside;
            } else if (label.values.data[i] <= -1.0) {
                ++at_low;
            } else {
                ++at_high;
            }
        }
        REQUIRE(valid_count > 0);
        // the 2/98 design clips ~2% per side before rounding; the BF16 tie band
        // near +-1 then absorbs a density-dependent sliver, so "strictly inside"
        // sits a little under the 96% ideal
        CHECK(static_cast<double>(inside) / valid_count >= 0.94);
        CHECK(static_cast<double>(at_low) / valid_count <= 0.03);
        CHECK(static_cast<double>(at_high) / valid_count <= 0.03);

        // pre-rounding clip fractions follow the 2/98 anchors directly
        std::vector<double> dlogs;
        for (std::size_t i = 0; i < s.depth.size(); ++i) {
            if (s.valid.data[i] && s.depth.data[i] >= 1e-6) {
                dlogs.push_back(std::log(s.depth.data[i] + 1e-6));
            }
        }
        double p2 = percentile(dlogs, 2.0);
        double p98 = percentile(dlogs, 98.0);
        int raw_below = 0, raw_above = 0;
        for (double u : dlogs) {
            if (u < p2) ++raw_below;
            if (u > p98) ++raw_above;
        }
        CHECK(static_cast<double>(raw_below) / dlogs.size() <= 0.022);
        CHECK(static_cast<double>(raw_above) / dlogs.size() <= 0.022);
    }
}

TEST_CASE("dataset save/load round trip with checksums") {
    auto dir = fs::temp_directory_path() / "fe2e_test_dataset";
    fs::remove_all(dir);
    auto samples = generate_mixed_dataset(4, 16, 0.5, 77);
    auto manifest = save_dataset(samples, dir.string(), 77, 0.5);
    REQUIRE(manifest.count == 4);

    DatasetManifest loaded_manifest;
    auto loaded = load_dataset(dir.string(), &loaded_manifest);
    REQUIRE(loaded.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(loaded[i].pool == samples[i].pool);
        CHECK(loaded[i].meters_per_pixel == samples[i].meters_per_pixel);
        CHECK(loaded[i].valid.data == samples[i].valid.data);
        CHECK(loaded[i].image_proxy.data == samples[i].image_proxy.data);
        for (std::size_t k = 0; k < samples[i].depth.size(); ++k) {
            CHECK(loaded[i].depth.data[k] ==
                  static_cast<double>(static_cast<float>(samples[i].depth.data[k])));
            CHECK(loaded[i].normals.data[k].z ==
                  static_cast<double>(static_cast<float>(samples[i].normals.data[k].z)));
        }
    }

    // regeneration from the same seed gives identical checksums
    auto dir2 = fs::temp_directory_path() / "fe2e_test_dataset2";
    fs::remove_all(dir2);
    auto again = generate_mixed_dataset(4, 16, 0.5, 77);
    auto manifest2 = save_dataset(again, dir2.string(), 77, 0.5);
    CHECK(manifest.checksums == manifest2.checksums);

    // corrupting a stored file trips the checksum verification
    {
        std::fstream f(dir / "sample_00001_depth.pfm",
                       std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(40);
        f.put('\x42');
    }
    CHECK_THROWS_AS(load_dataset(dir.string()), LabError);

    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("mixed batch sampling follows the 90/10 rule") {
    auto indoor = generate_pool(PoolKind::IndoorLike, 3, 16, 1);
    auto outdoor = generate_pool(PoolKind::OutdoorLike, 2, 16, 2);

    Rng rng(405);
    auto refs = sample_batch_refs(indoor, outdoor, 100000, 0.9, rng);
    int from_indoor = 0;
    for (const auto& [pool, idx] : refs) {
        if (pool == 0) {
            ++from_indoor;
            CHECK(idx < 3);
        } else {
            CHECK(idx < 2);
        }
    }
    double frac = static_cast<double>(from_indoor) / 100000.0;
    CHECK(frac > 0.89);
    CHECK(frac < 0.91);

    // degenerate mix probabilities send everything to one pool
    Rng rng2(406);
    for (const auto& [pool, idx] : sample_batch_refs(indoor, outdoor, 500, 1.0, rng2)) {
        CHECK(pool == 0);
    }

    // determinism: same seed, same draw sequence
    Rng a(407), b(407);
    CHECK(sample_batch_refs(indoor, outdoor, 64, 0.9, a) ==
          sample_batch_refs(indoor, outdoor, 64, 0.9, b));

    std::vector<SceneSample> empty;
    Rng c(408);
    CHECK_THROWS_AS(sample_batch_refs(empty, outdoor, 8, 0.9, c), LabError);
}

TEST_CASE("mixed dataset generation respects the requested mix") {
    auto samples = generate_mixed_dataset(2000, 8, 0.9, 31);
    int indoor = 0;
    for (const auto& s : samples) indoor += s.pool == PoolKind::IndoorLike ? 1 : 0;
    double frac = indoor / 2000.0;
    CHECK(frac > 0.88);
    CHECK(frac < 0.92);

    CHECK(generate_mixed_dataset(0, 8, 0.9, 1).empty());
    CHECK_THROWS_AS(generate_mixed_dataset(2, 4, 0.9, 1), LabError);  // resolution too small
}
