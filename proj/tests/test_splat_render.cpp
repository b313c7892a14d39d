// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "splatfuse/splat_render.hpp"

using namespace splatfuse;

namespace {

const CameraIntrinsics kCam{100.0, 100.0, 50.0, 50.0, 100, 100};
const Vec3f kGray(0.5f, 0.5f, 0.5f);

GaussianId put(GaussianMap &map, SparseVoxelGrid &grid, const Vec3 &mean, double var, float opacity,
               const Vec3f &color, GaussianId id) {
    GaussianPrimitive g;
    g.id = id;
    g.mean = mean;
    g.covariance = Mat3::Identity() * var;
    g.opacity = opacity;
    g.color = color;
    map.insert(g, grid);
    return id;
}

} // namespace

TEST_CASE("project_gaussian examples") {
    GaussianPrimitive g;
    g.mean = Vec3(0, 0, 1);
    g.covariance = Mat3::Identity() * 1e-4;
    const auto p = project_gaussian(g, Pose::Identity(), kCam);
    REQUIRE(p);
    CHECK(p->mean.x() == doctest::Approx(50.0));
    CHECK(p->mean.y() == doctest::Approx(50.0));
    CHECK(p->depth == doctest::Approx(1.0));
    CHECK(p->cov(0, 0) == doctest::Approx(1.0 + kScreenDilation));
    CHECK(p->cov(1, 1) == doctest::Approx(1.0 + kScreenDilation));
    CHECK(std::abs(p->cov(0, 1)) < 1e-12);
    CHECK((p->cov * p->conic - Eigen::Matrix2d::Identity()).norm() < 1e-9);

    g.mean = Vec3(0, 0, -0.5);
    CHECK_FALSE(project_gaussian(g, Pose::Identity(), kCam));
    g.mean = Vec3(0, 0, 0.005);
    CHECK_FALSE(project_gaussian(g, Pose::Identity(), kCam));
}

TEST_CASE("projection matches the reference EWA under a rotated pose") {
    std::mt19937 rng(8);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 50; ++trial) {
        GaussianPrimitive g;
        g.mean = Vec3(0.3 * n(rng), 0.3 * n(rng), 2.0 + 0.2 * n(rng));
        Mat3 a;
        for (int k = 0; k < 9; ++k) {
            a(k / 3, k % 3) = 0.02 * n(rng);
        }
        g.covariance = a * a.transpose() + Mat3::Identity() * 1e-6;
        const Pose w2c = Pose(Eigen::AngleAxisd(0.1 * n(rng), Vec3(n(rng), n(rng), n(rng)).normalized()));
        const auto p = project_gaussian(g, w2c, kCam);
        const auto q = oracle::project(g, w2c, kCam);
        REQUIRE(p.has_value() == q.has_value());
        if (!p) {
            continue;
        }
        CHECK((p->mean - q->mean).norm() < 1e-9);
        CHECK((p->conic - q->inv).norm() < 1e-6 * q->inv.norm());
        CHECK(p->depth == doctest::Approx(q->depth));
    }
}

TEST_CASE("empty render is background") {
    GaussianMap map(0.01);
    const RenderOutput out = render({}, map, Pose::Identity(), kCam, kGray);
    CHECK(out.width == 100);
    CHECK(out.height == 100);
    for (int y = 0; y < 100; y += 7) {
        for (int x = 0; x < 100; x += 7) {
            CHECK(out.color_at(x, y) == kGray);
            CHECK(out.depth_at(x, y) == 0.0f);
            CHECK(out.alpha_at(x, y) == 0.0f);
        }
    }
}

TEST_CASE("single opaque splat") {
    SparseVoxelGrid grid(0.05, 0.07);
    GaussianMap map(0.01);
    const Vec3f h(0.9f, 0.2f, 0.1f);
    const GaussianId id = put(map, grid, Vec3(0, 0, 1.5), 1e-4, 1.0f, h, 1);
    const std::vector<GaussianId> ids{id};
    const RenderOutput out = render(ids, map, Pose::Identity(), kCam, kGray);
    const Vec3f c = out.color_at(50, 50);
    for (int k = 0; k < 3; ++k) {
        CHECK(std::abs(c[k] - h[k]) <= 0.01f);
    }
    CHECK(std::abs(out.depth_at(50, 50) - 1.5f) <= 0.015f);
    CHECK(out.alpha_at(50, 50) == doctest::Approx(kMaxAlpha));
    // alpha-normalised depth of a lone fronto-parallel splat
    CHECK(std::abs(out.depth_at(50, 50) / out.alpha_at(50, 50) - 1.5f) <= 1e-3f);
    // far outside the 3 sigma footprint
    CHECK(out.alpha_at(5, 5) == 0.0f);
}

TEST_CASE("two stacked splats composite in depth order") {
    SparseVoxelGrid grid(0.05, 0.07);
    GaussianMap map(0.01);
    const Vec3f h1(1.0f, 0.0f, 0.0f);
    const Vec3f h2(0.0f, 0.0f, 1.0f);
    // inserted far-first so that id order disagrees with depth order
    const GaussianId far = put(map, grid, Vec3(0, 0, 2.0), 4e-4, 0.5f, h2, 1);
    const GaussianId near = put(map, grid, Vec3(0, 0, 1.0), 1e-4, 0.5f, h1, 2);
    const std::vector<GaussianId> ids{far, near};
    const RenderOutput out = render(ids, map, Pose::Identity(), kCam, kGray);
    const Vec3f expect = 0.5f * h1 + 0.25f * h2 + 0.25f * kGray;
    CHECK((out.color_at(50, 50) - expect).norm() < 1e-5f);
    CHECK(out.depth_at(50, 50) == doctest::Approx(0.5 * 1.0 + 0.25 * 2.0));
    CHECK(out.alpha_at(50, 50) == doctest::Approx(0.75));
}

TEST_CASE("equal depths are ordered by id") {
    SparseVoxelGrid grid(0.05, 0.07);
    GaussianMap map(0.001);
    put(map, grid, Vec3(0, 0, 1.0), 1e-4, 0.5f, Vec3f(1, 0, 0), 7);
    put(map, grid, Vec3(0, 0, 1.0), 1e-4, 0.5f, Vec3f(0, 1, 0), 3);
    const std::vector<GaussianId> a{7, 3};
    const std::vector<GaussianId> b{3, 7};
    const RenderOutput ra = render(a, map, Pose::Identity(), kCam, kGray);
    const RenderOutput rb = render(b, map, Pose::Identity(), kCam, kGray);
    CHECK(ra.color == rb.color);
    // id 3 is in front
    CHECK(ra.color_at(50, 50).y() > ra.color_at(50, 50).x());
}

TEST_CASE("render rejects unknown ids") {
    GaussianMap map(0.01);
    const std::vector<GaussianId> ids{42};
    CHECK_THROWS_AS(render(ids, map, Pose::Identity(), kCam, kGray), Error);
}

TEST_CASE("front-to-back render equals back-to-front compositing") {
    std::mt19937 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int scene = 0; scene < 5; ++scene) {
        SparseVoxelGrid grid(0.05, 0.07);
        GaussianMap map(0.001);
        std::vector<GaussianId> ids;
        std::vector<oracle::Splat> splats;
        for (int n = 0; n < 20; ++n) {
            const Vec3 m(u(rng) - 0.5, u(rng) - 0.5, 1.0 + 2.0 * u(rng));
            const GaussianId id = put(map, grid, m, 1e-4 + 2e-3 * u(rng), static_cast<float>(u(rng)),
                                      Vec3f(u(rng), u(rng), u(rng)), static_cast<GaussianId>(n + 1));
            ids.push_back(id);
            if (auto s = oracle::project(*map.find(id), Pose::Identity(), kCam)) {
                splats.push_back(*s);
            }
        }
        const RenderOutput out = render(ids, map, Pose::Identity(), kCam, kGray);
        for (int y = 0; y < 100; ++y) {
            for (int x = 0; x < 100; ++x) {
                const auto ref = oracle::composite_back_to_front(splats, x, y, kGray.cast<double>());
                REQUIRE((out.color_at(x, y).cast<double>() - ref.color).cwiseAbs().maxCoeff() < 1e-5);
                REQUIRE(std::abs(out.depth_at(x, y) - ref.depth) < 1e-5);
                REQUIRE(std::abs(out.alpha_at(x, y) - ref.alpha) < 1e-5);
            }
        }
    }
}

TEST_CASE("png conversions") {
    RenderOutput out;
    out.width = 2;
    out.height = 1;
    out.color = {1.0f, 0.0f, 0.5f, 2.0f, -1.0f, 0.25f};
    out.depth = {1.2346f, 70.0f};
    out.alpha = {1.0f, 1.0f};
    const ImageU8 rgb = to_rgb8(out);
    CHECK(rgb.at(0, 0, 0) == 255);
    CHECK(rgb.at(0, 0, 1) == 0);
    CHECK(rgb.at(1, 0, 0) == 255);
    CHECK(rgb.at(1, 0, 1) == 0);
    const ImageU16 d = to_depth_mm(out);
    CHECK(d.at(0, 0) == 1235);
    CHECK(d.at(1, 0) == 65535);
}
