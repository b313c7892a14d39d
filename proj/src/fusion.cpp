// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include "splatfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include <absl/container/flat_hash_map.h>
#include <absl/container/flat_hash_set.h>
#include <tbb/parallel_for.h>

namespace splatfuse {

std::vector<DepthSample> downsample_depth(const Frame &frame, const CameraIntrinsics &intrinsics,
                                          double grid_step) {
    if (!(grid_step > 0.0)) {
        fail("downsample step must be positive");
    }
    if (frame.depth.width != intrinsics.width || frame.depth.height != intrinsics.height) {
        fail("frame " + std::to_string(frame.index) + ": depth size does not match intrinsics");
    }
    const bool has_color = frame.color.width == frame.depth.width &&
                           frame.color.height == frame.depth.height && frame.color.channels == 3;
    const bool has_regions = frame.region_map.width == frame.depth.width &&
                             frame.region_map.height == frame.depth.height;

    std::vector<DepthSample> samples;
    absl::flat_hash_map<VoxelKey, std::size_t> occupied;
    for (int v = 0; v < frame.depth.height; ++v) {
        for (int u = 0; u < frame.depth.width; ++u) {
            const float z = frame.depth.at(u, v);
            if (!(z > 0.0f) || !std::isfinite(z)) {
                continue;
            }
            const Vec3 p = frame.camera_to_world * intrinsics.back_project(u, v, z);
            if (!occupied.try_emplace(world_to_voxel(p, grid_step), samples.size()).second) {
                continue;
            }
            DepthSample s;
            s.u = u;
            s.v = v;
            s.point = p;
            if (has_color) {
                s.color = Vec3f(frame.color.at(u, v, 0), frame.color.at(u, v, 1), frame.color.at(u, v, 2)) /
                          255.0f;
            }
            s.region = has_regions ? frame.region_map.at(u, v) : -1;
            samples.push_back(s);
        }
    }
    return samples;
}

std::optional<double> tsdf_sample(const Vec3 &sensor_origin, const Vec3 &surface_point,
                                  const Vec3 &voxel_center, double truncation) {
    if (!(truncation > 0.0)) {
        fail("truncation must be positive");
    }
    const Vec3 ray = surface_point - sensor_origin;
    const double depth = ray.norm();
    if (!(depth > 0.0)) {
        fail("degenerate ray: surface point equals sensor origin");
    }
    const double along = (voxel_center - sensor_origin).dot(ray) / depth;
    const double sdf = depth - along;
    if (sdf < -truncation) {
        return std::nullopt;
    }
    return std::min(sdf, truncation);
}

TsdfState blend_tsdf(TsdfState previous, double sample, double max_weight, BlendMode mode) {
    const double weight = std::min(max_weight, previous.weight + 1.0);
    TsdfState next;
    next.weight = weight;
    if (mode == BlendMode::Paper) {
        next.tsdf = (previous.tsdf * previous.weight + sample * weight) / (previous.weight + weight);
    } else {
        next.tsdf = (previous.tsdf * previous.weight + sample) / (previous.weight + 1.0);
    }
    return next;
}

IntegrationStats integrate_samples(SparseVoxelGrid &grid, const Vec3 &sensor_origin,
                                   std::span<const DepthSample> samples, BlendMode mode,
                                   const UpdateObserver &observer) {
    const double s = grid.voxel_size();
    const double trunc = grid.truncation();
    std::vector<std::vector<std::pair<VoxelKey, double>>> per_ray(samples.size());

    tbb::parallel_for(std::size_t{0}, samples.size(), [&](std::size_t r) {
        const Vec3 &p = samples[r].point;
        const Vec3 ray = p - sensor_origin;
        const double depth = ray.norm();
        if (!(depth > 0.0)) {
            return;
        }
        const Vec3 dir = ray / depth;
        const auto keys = dda_traverse(sensor_origin, dir, std::max(0.0, depth - trunc), depth + trunc, s);
        auto &out = per_ray[r];
        out.reserve(keys.size());
        for (const VoxelKey &key : keys) {
            if (const auto sdf = tsdf_sample(sensor_origin, p, voxel_center(key, s), trunc)) {
                out.emplace_back(key, *sdf);
            }
        }
    });

    IntegrationStats stats;
    stats.rays_cast = samples.size();
    const std::size_t before = grid.size();
    absl::flat_hash_set<VoxelIndex> touched;
    for (const auto &ray : per_ray) {
        for (const auto &[key, sdf] : ray) {
            const VoxelIndex idx = grid.get_or_insert(key);
            Voxel &v = grid.voxel(idx);
            const TsdfState next = blend_tsdf({v.weight, v.tsdf}, sdf, grid.max_weight(), mode);
            v.weight = static_cast<float>(next.weight);
            v.tsdf = static_cast<float>(next.tsdf);
            touched.insert(idx);
            ++stats.voxel_updates;
            if (observer) {
                observer(key, sdf);
            }
        }
    }
    stats.voxels_touched = touched.size();
    stats.voxels_allocated = grid.size() - before;
    return stats;
}

IntegrationStats integrate_frame(SparseVoxelGrid &grid, const Frame &frame,
                                 const CameraIntrinsics &intrinsics, const FusionConfig &config,
                                 const UpdateObserver &observer) {
    if (!is_rigid(frame.camera_to_world.matrix())) {
        fail("frame " + std::to_string(frame.index) + ": pose is not a rigid transform");
    }
    const auto samples = downsample_depth(frame, intrinsics, config.downsample_step);
    return integrate_samples(grid, frame.camera_to_world.translation(), samples, config.blend_mode,
                             observer);
}

void fuse_semantics(SparseVoxelGrid &grid, VoxelIndex voxel, std::span<const float> embedding,
                    double confidence) {
    if (!(confidence > 0.0) || !std::isfinite(confidence)) {
        fail("semantic confidence must be positive");
    }
    grid.ensure_feature_dim(embedding.size());
    Voxel &v = grid.voxel(voxel);
    auto f = grid.feature(voxel);
    const double prior = v.confidence;
    const double total = prior + confidence;
    for (std::size_t d = 0; d < f.size(); ++d) {
        if (!std::isfinite(embedding[d])) {
            fail("semantic embedding must be finite");
        }
    }
    for (std::size_t d = 0; d < f.size(); ++d) {
        f[d] = static_cast<float>((prior * f[d] + confidence * embedding[d]) / total);
    }
    v.confidence = static_cast<float>(total);
}

} // namespace splatfuse
