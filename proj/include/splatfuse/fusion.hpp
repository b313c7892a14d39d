// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
//
// Per-frame TSDF integration along sensor rays and confidence-weighted semantic fusion.
#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "splatfuse/camera.hpp"
#include "splatfuse/frame.hpp"
#include "splatfuse/sparse_grid.hpp"

namespace splatfuse {

/// How a new TSDF sample is blended into a voxel.
///  - Paper: w_k = min(w_max, w_{k-1} + 1), tsdf_k = (tsdf_{k-1} w_{k-1} + sample w_k) / (w_{k-1} + w_k)
///  - UnitSample: the running mean, tsdf_k = (tsdf_{k-1} w_{k-1} + sample) / (w_{k-1} + 1)
enum class BlendMode { Paper, UnitSample };

struct FusionConfig {
    double downsample_step = 0.05;
    BlendMode blend_mode = BlendMode::Paper;
};

struct DepthSample {
    int u = 0;
    int v = 0;
    Vec3 point = Vec3::Zero();
    Vec3f color = Vec3f::Zero();
    std::int32_t region = -1;
};

/// Back-projects valid depth pixels to world space and keeps the first pixel (raster
/// order) landing in each `grid_step`-sized cell.
std::vector<DepthSample> downsample_depth(const Frame &frame, const CameraIntrinsics &intrinsics,
                                          double grid_step);

/// Projective truncated distance of `voxel_center` w.r.t. the surface hit along the ray
/// origin -> surface. Positive in front of the surface, clamped to +trunc, nullopt when
/// more than `truncation` behind it.
std::optional<double> tsdf_sample(const Vec3 &sensor_origin, const Vec3 &surface_point,
                                  const Vec3 &voxel_center, double truncation);

struct TsdfState {
    double weight = 0.0;
    double tsdf = 0.0;
};

TsdfState blend_tsdf(TsdfState previous, double sample, double max_weight, BlendMode mode);

struct IntegrationStats {
    std::size_t rays_cast = 0;
    std::size_t voxel_updates = 0;
    std::size_t voxels_touched = 0;
    std::size_t voxels_allocated = 0;
};

/// Called once per voxel update, in application order, with the sample that was blended.
using UpdateObserver = std::function<void(const VoxelKey &key, double sample)>;

/// Integrates pre-computed samples observed from `sensor_origin`. Ray/voxel sample
/// computation runs in parallel; voxel updates are applied serially in sample order.
IntegrationStats integrate_samples(SparseVoxelGrid &grid, const Vec3 &sensor_origin,
                                   std::span<const DepthSample> samples, BlendMode mode,
                                   const UpdateObserver &observer = {});

IntegrationStats integrate_frame(SparseVoxelGrid &grid, const Frame &frame,
                                 const CameraIntrinsics &intrinsics, const FusionConfig &config,
                                 const UpdateObserver &observer = {});

/// f <- (c f + conf e) / (c + conf); c <- c + conf.
void fuse_semantics(SparseVoxelGrid &grid, VoxelIndex voxel, std::span<const float> embedding,
                    double confidence);

} // namespace splatfuse
