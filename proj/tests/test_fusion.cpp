// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "splatfuse/fusion.hpp"
#include "splatfuse/synth.hpp"

using namespace splatfuse;

namespace {

CameraIntrinsics small_camera() { return CameraIntrinsics{100.0, 100.0, 50.0, 50.0, 100, 100}; }

Frame flat_frame(float z) {
    Frame f;
    f.depth = ImageF(100, 100, 1, z);
    f.color = ImageU8(100, 100, 3, 128);
    f.region_map = Image<std::int32_t>(100, 100, 1, -1);
    return f;
}

} // namespace

TEST_CASE("downsample a fronto-parallel plane") {
    const auto samples = downsample_depth(flat_frame(1.0f), small_camera(), 0.05);
    // the image covers a 1 m x 1 m patch of the plane
    const double expected = 1.0 / (0.05 * 0.05);
    CHECK(std::abs(samples.size() - expected) <= 0.1 * expected);
    for (const auto &s : samples) {
        CHECK(s.point.z() == doctest::Approx(1.0));
    }
}

TEST_CASE("downsample skips invalid depth") {
    CHECK(downsample_depth(flat_frame(0.0f), small_camera(), 0.05).empty());
}

TEST_CASE("downsample a single pixel") {
    Frame f = flat_frame(0.0f);
    f.depth.at(30, 70) = 2.0f;
    f.color.at(30, 70, 0) = 255;
    f.region_map.at(30, 70) = 4;
    f.region_table[4] = RegionEntry{{1.0f}, 1.0f};
    f.camera_to_world = Pose(Eigen::Translation3d(1.0, 2.0, 3.0));
    const auto samples = downsample_depth(f, small_camera(), 0.05);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].u == 30);
    CHECK(samples[0].v == 70);
    CHECK((samples[0].point - Vec3(1.0 + (30 - 50) * 2.0 / 100, 2.0 + (70 - 50) * 2.0 / 100, 5.0)).norm() < 1e-12);
    CHECK(samples[0].color.x() == doctest::Approx(1.0));
    CHECK(samples[0].region == 4);
}

TEST_CASE("tsdf_sample along the ray") {
    const Vec3 o = Vec3::Zero();
    const Vec3 p(0.0, 0.0, 1.0);
    CHECK(*tsdf_sample(o, p, Vec3(0, 0, 0.97), 0.07) == doctest::Approx(0.03));
    CHECK(*tsdf_sample(o, p, Vec3(0, 0, 0.90), 0.07) == doctest::Approx(0.07));
    CHECK_FALSE(tsdf_sample(o, p, Vec3(0, 0, 1.10), 0.07).has_value());
    CHECK(*tsdf_sample(o, p, Vec3(0.3, 0, 1.02), 0.07) == doctest::Approx(-0.02));
    CHECK_THROWS_AS(tsdf_sample(p, p, Vec3(0, 0, 0.5), 0.07), Error);
}

TEST_CASE("tsdf blend rules") {
    const TsdfState a = blend_tsdf({1.0, 0.02}, 0.05, 64.0, BlendMode::Paper);
    CHECK(a.weight == 2.0);
    CHECK(a.tsdf == doctest::Approx(0.04));
    const TsdfState b = blend_tsdf({0.0, 0.07}, -0.01, 64.0, BlendMode::Paper);
    CHECK(b.weight == 1.0);
    CHECK(b.tsdf == doctest::Approx(-0.01));
    const TsdfState c = blend_tsdf({64.0, 0.01}, 0.03, 64.0, BlendMode::Paper);
    CHECK(c.weight == 64.0);
    CHECK(c.tsdf == doctest::Approx(0.02));
    const TsdfState d = blend_tsdf({3.0, 0.02}, 0.06, 64.0, BlendMode::UnitSample);
    CHECK(d.weight == 4.0);
    CHECK(d.tsdf == doctest::Approx(0.03));
}

TEST_CASE("integrate_frame rejects a non-rigid pose") {
    SparseVoxelGrid grid(0.05, 0.07);
    Frame f = flat_frame(1.0f);
    Mat4 m = Mat4::Identity();
    m(0, 0) = 1.1;
    f.camera_to_world = Pose(m);
    CHECK_THROWS_AS(integrate_frame(grid, f, small_camera(), FusionConfig{}), Error);
}

TEST_CASE("integration keeps tsdf inside the band") {
    SparseVoxelGrid grid(0.05, 0.07);
    const IntegrationStats st = integrate_frame(grid, flat_frame(1.0f), small_camera(), FusionConfig{});
    CHECK(st.rays_cast > 0);
    CHECK(st.voxels_allocated == grid.size());
    CHECK(st.voxels_touched == grid.size());
    for (const Voxel &v : grid.voxels()) {
        CHECK(std::abs(v.tsdf) <= 0.07f + 1e-7f);
        CHECK(v.weight >= 1.0f);
    }
}

TEST_CASE("repeated identical single-ray frames converge monotonically") {
    SparseVoxelGrid grid(0.05, 0.07);
    Frame f = flat_frame(0.0f);
    f.depth.at(61, 47) = 1.23f;
    Frame prior = flat_frame(0.0f);
    prior.depth.at(61, 47) = 1.26f;
    integrate_frame(grid, prior, small_camera(), FusionConfig{});
    std::map<VoxelKey, double> target;
    std::map<VoxelKey, double> gap;
    for (int n = 0; n < 6; ++n) {
        integrate_frame(grid, f, small_camera(), FusionConfig{},
                        [&](const VoxelKey &k, double sample) { target[k] = sample; });
        for (const auto &[k, x] : target) {
            const double now = std::abs(grid.voxel(*grid.find(k)).tsdf - x);
            if (gap.contains(k)) {
                CHECK(now <= gap[k] + 1e-7);
            }
            gap[k] = now;
        }
    }
    CHECK_FALSE(target.empty());
}

TEST_CASE("integration matches a per-voxel replay") {
    for (BlendMode mode : {BlendMode::Paper, BlendMode::UnitSample}) {
        SynthScene scene(two_object_spec(), 1);
        SparseVoxelGrid grid(0.05, 0.07);
        oracle::TsdfReplay replay;
        replay.paper_blend = mode == BlendMode::Paper;
        FusionConfig cfg;
        cfg.blend_mode = mode;
        for (int n = 0; n < 3; ++n) {
            const Frame f = scene.render_frame(n * 6);
            integrate_frame(grid, f, scene.spec().intrinsics, cfg);
            replay.add_frame(f.depth.data, scene.spec().intrinsics, f.camera_to_world);
        }
        REQUIRE(grid.size() == replay.log.size());
        double worst = 0.0;
        for (const Voxel &v : grid.voxels()) {
            REQUIRE(replay.log.contains(v.key));
            const auto [w, phi] = replay.replay(v.key);
            CHECK(v.weight == w);
            worst = std::max(worst, std::abs(v.tsdf - phi));
        }
        CHECK(worst <= 1e-5);
    }
}

TEST_CASE("fuse_semantics examples") {
    SparseVoxelGrid grid(0.05, 0.07);
    const VoxelIndex v = grid.get_or_insert({0, 0, 0});
    const std::vector<float> x{1.0f, 0.0f};
    const std::vector<float> y{0.0f, 1.0f};
    fuse_semantics(grid, v, x, 1.0);
    CHECK(grid.feature(v)[0] == 1.0f);
    CHECK(grid.voxel(v).confidence == 1.0f);
    fuse_semantics(grid, v, y, 1.0);
    CHECK(grid.feature(v)[0] == doctest::Approx(0.5));
    CHECK(grid.feature(v)[1] == doctest::Approx(0.5));
    CHECK(grid.voxel(v).confidence == 2.0f);

    const VoxelIndex w = grid.get_or_insert({1, 0, 0});
    const std::vector<float> e{0.6f, 0.8f};
    fuse_semantics(grid, w, e, 3.0);
    fuse_semantics(grid, w, e, 2.0);
    CHECK(grid.feature(w)[0] == doctest::Approx(0.6));
    CHECK(grid.feature(w)[1] == doctest::Approx(0.8));
    CHECK(grid.voxel(w).confidence == 5.0f);

    CHECK_THROWS_AS(fuse_semantics(grid, w, e, 0.0), Error);
    CHECK_THROWS_AS(fuse_semantics(grid, w, e, -1.0), Error);
}

TEST_CASE("semantic fusion is a confidence-weighted mean in any order") {
    std::mt19937 rng(5);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> conf(0.1, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + trial % 7;
        std::vector<std::vector<float>> es(n, std::vector<float>(8));
        std::vector<double> cs(n);
        for (int k = 0; k < n; ++k) {
            for (float &x : es[k]) {
                x = static_cast<float>(g(rng));
            }
            cs[k] = conf(rng);
        }
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        SparseVoxelGrid grid(0.05, 0.07);
        const VoxelIndex v = grid.get_or_insert({0, 0, 0});
        for (int k : order) {
            fuse_semantics(grid, v, es[k], cs[k]);
        }
        const double total = std::accumulate(cs.begin(), cs.end(), 0.0);
        CHECK(grid.voxel(v).confidence == doctest::Approx(total).epsilon(1e-6));
        for (int d = 0; d < 8; ++d) {
            double mean = 0.0;
            for (int k = 0; k < n; ++k) {
                mean += cs[k] * es[k][d];
            }
            CHECK(std::abs(grid.feature(v)[d] - mean / total) < 1e-5);
        }
    }
}
