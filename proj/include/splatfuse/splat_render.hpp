// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
//
// Forward Gaussian splatting on the CPU: perspective projection of each primitive to a
// 2D Gaussian, depth ordering, and front-to-back alpha compositing of color and depth.
#pragma once

#include <optional>
#include <span>

#include "splatfuse/camera.hpp"
#include "splatfuse/gaussian_map.hpp"
#include "splatfuse/image.hpp"

namespace splatfuse {

inline constexpr double kNearPlane = 0.01;
inline constexpr double kScreenDilation = 0.3;
inline constexpr double kMaxAlpha = 0.99;
inline constexpr int kTileSize = 16;

struct Projected2DGaussian {
    GaussianId id = 0;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();   // includes the +0.3 px^2 dilation
    Eigen::Matrix2d conic = Eigen::Matrix2d::Identity(); // inverse of cov
    double depth = 0.0;
    float opacity = 0.0f;
    Vec3f color = Vec3f::Zero();
    double radius = 0.0; // 3 sigma along the major axis, pixels
};

/// Projects a primitive through `world_to_camera`. nullopt when the camera-space depth is
/// at or behind the near plane.
std::optional<Projected2DGaussian> project_gaussian(const GaussianPrimitive &primitive,
                                                    const Pose &world_to_camera,
                                                    const CameraIntrinsics &intrinsics);

/// Opacity-weighted falloff at pixel (x, y): o exp(-d^T conic d / 2) clipped to [0, 0.99].
/// nullopt outside the 3 sigma footprint.
std::optional<double> splat_alpha(const Projected2DGaussian &g, double x, double y);

/// Per-pixel float buffers: color is RGB interleaved.
struct RenderOutput {
    int width = 0;
    int height = 0;
    std::vector<float> color;
    std::vector<float> depth;
    std::vector<float> alpha;

    Vec3f color_at(int x, int y) const {
        const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
        return Vec3f(color[i], color[i + 1], color[i + 2]);
    }
    float depth_at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }
    float alpha_at(int x, int y) const { return alpha[static_cast<std::size_t>(y) * width + x]; }
};

/// Renders the listed primitives (ids absent from the map are an error). Contributors
/// are composited per pixel in (depth, id) order over a 16x16 tile grid.
RenderOutput render(std::span<const GaussianId> ids, const GaussianMap &map, const Pose &world_to_camera,
                    const CameraIntrinsics &intrinsics, const Vec3f &background);

ImageU8 to_rgb8(const RenderOutput &out);
/// Depth in millimetres, saturating at 65535.
ImageU16 to_depth_mm(const RenderOutput &out);

} // namespace splatfuse
