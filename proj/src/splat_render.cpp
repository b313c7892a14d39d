// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include "splatfuse/splat_render.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <tbb/parallel_for.h>

namespace splatfuse {

std::optional<Projected2DGaussian> project_gaussian(const GaussianPrimitive &primitive,
                                                    const Pose &world_to_camera,
                                                    const CameraIntrinsics &intrinsics) {
    const Vec3 pc = world_to_camera * primitive.mean;
    if (pc.z() <= kNearPlane) {
        return std::nullopt;
    }
    const double inv_z = 1.0 / pc.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << intrinsics.fx * inv_z, 0.0, -intrinsics.fx * pc.x() * inv_z * inv_z,
        0.0, intrinsics.fy * inv_z, -intrinsics.fy * pc.y() * inv_z * inv_z;
    const Mat3 &w = world_to_camera.linear();
    Eigen::Matrix2d cov = jac * w * primitive.covariance * w.transpose() * jac.transpose();
    cov = 0.5 * (cov + cov.transpose());
    cov.diagonal().array() += kScreenDilation;

    Projected2DGaussian g;
    g.id = primitive.id;
    g.mean = Eigen::Vector2d(intrinsics.fx * pc.x() * inv_z + intrinsics.cx,
                             intrinsics.fy * pc.y() * inv_z + intrinsics.cy);
    g.cov = cov;
    g.conic = cov.inverse();
    g.depth = pc.z();
    g.opacity = primitive.opacity;
    g.color = primitive.color;
    const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
    const double det = cov.determinant();
    const double lambda_max = mid + std::sqrt(std::max(0.1, mid * mid - det));
    g.radius = 3.0 * std::sqrt(lambda_max);
    return g;
}

std::optional<double> splat_alpha(const Projected2DGaussian &g, double x, double y) {
    const Eigen::Vector2d d(x - g.mean.x(), y - g.mean.y());
    const double m = d.dot(g.conic * d);
    if (m > 9.0) {
        return std::nullopt;
    }
    return std::clamp(g.opacity * std::exp(-0.5 * m), 0.0, kMaxAlpha);
}

RenderOutput render(std::span<const GaussianId> ids, const GaussianMap &map, const Pose &world_to_camera,
                    const CameraIntrinsics &intrinsics, const Vec3f &background) {
    intrinsics.validate();
    const int width = intrinsics.width;
    const int height = intrinsics.height;
    RenderOutput out;
    out.width = width;
    out.height = height;
    out.color.assign(static_cast<std::size_t>(width) * height * 3, 0.0f);
    out.depth.assign(static_cast<std::size_t>(width) * height, 0.0f);
    out.alpha.assign(static_cast<std::size_t>(width) * height, 0.0f);

    std::vector<Projected2DGaussian> splats;
    splats.reserve(ids.size());
    for (GaussianId id : ids) {
        const GaussianPrimitive *g = map.find(id);
        if (!g) {
            fail("render: unknown gaussian id " + std::to_string(id));
        }
        if (auto p = project_gaussian(*g, world_to_camera, intrinsics)) {
            if (p->mean.x() + p->radius < 0.0 || p->mean.x() - p->radius > width - 1 ||
                p->mean.y() + p->radius < 0.0 || p->mean.y() - p->radius > height - 1) {
                continue;
            }
            splats.push_back(*p);
        }
    }
    std::sort(splats.begin(), splats.end(), [](const Projected2DGaussian &a, const Projected2DGaussian &b) {
        return a.depth != b.depth ? a.depth < b.depth : a.id < b.id;
    });

    const int tiles_x = (width + kTileSize - 1) / kTileSize;
    const int tiles_y = (height + kTileSize - 1) / kTileSize;
    std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (std::uint32_t n = 0; n < splats.size(); ++n) {
        const auto &g = splats[n];
        const int x0 = std::max(0, static_cast<int>(std::floor((g.mean.x() - g.radius) / kTileSize)));
        const int x1 = std::min(tiles_x - 1, static_cast<int>(std::floor((g.mean.x() + g.radius) / kTileSize)));
        const int y0 = std::max(0, static_cast<int>(std::floor((g.mean.y() - g.radius) / kTileSize)));
        const int y1 = std::min(tiles_y - 1, static_cast<int>(std::floor((g.mean.y() + g.radius) / kTileSize)));
        for (int ty = y0; ty <= y1; ++ty) {
            for (int tx = x0; tx <= x1; ++tx) {
                bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(n);
            }
        }
    }

    tbb::parallel_for(std::size_t{0}, bins.size(), [&](std::size_t tile) {
        const int tx = static_cast<int>(tile % tiles_x);
        const int ty = static_cast<int>(tile / tiles_x);
        const auto &bin = bins[tile];
        for (int y = ty * kTileSize; y < std::min(height, (ty + 1) * kTileSize); ++y) {
            for (int x = tx * kTileSize; x < std::min(width, (tx + 1) * kTileSize); ++x) {
                double transmittance = 1.0;
                Eigen::Vector3d c = Eigen::Vector3d::Zero();
                double d = 0.0;
                for (std::uint32_t n : bin) {
                    const auto &g = splats[n];
                    const auto a = splat_alpha(g, x, y);
                    if (!a) {
                        continue;
                    }
                    const double w = *a * transmittance;
                    c += w * g.color.cast<double>();
                    d += w * g.depth;
                    transmittance *= 1.0 - *a;
                }
                c += transmittance * background.cast<double>();
                const std::size_t px = static_cast<std::size_t>(y) * width + x;
                for (int ch = 0; ch < 3; ++ch) {
                    out.color[px * 3 + ch] = static_cast<float>(c[ch]);
                }
                out.depth[px] = static_cast<float>(d);
                out.alpha[px] = static_cast<float>(1.0 - transmittance);
            }
        }
    });
    return out;
}

ImageU8 to_rgb8(const RenderOutput &out) {
    ImageU8 img(out.width, out.height, 3);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        img.data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(out.color[i], 0.0f, 1.0f) * 255.0f));
    }
    return img;
}

ImageU16 to_depth_mm(const RenderOutput &out) {
    ImageU16 img(out.width, out.height, 1);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const double mm = std::round(static_cast<double>(out.depth[i]) * 1000.0);
        img.data[i] = static_cast<std::uint16_t>(std::clamp(mm, 0.0, 65535.0));
    }
    return img;
}

} // namespace splatfuse
