// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "splatfuse/fusion.hpp"
#include "splatfuse/query.hpp"

namespace splatfuse {

/// Every tunable of the pipeline. Values of 0 for downsample_step, overlap_radius,
/// dbscan_eps and match_radius mean "derive from voxel_size".
struct EngineConfig {
    double voxel_size = 0.05;
    double truncation = 0.07;
    double max_weight = 64.0;
    BlendMode blend_mode = BlendMode::Paper;
    double downsample_step = 0.0; // voxel_size
    int keyframe_interval = 10;
    int knn = 20;
    double admit_tsdf = -0.03;
    double prune_tsdf = -0.04;
    double overlap_radius = 0.0; // voxel_size / 2

    double seed_threshold = 0.8;
    int keyframes_per_cluster = 3;
    double window_half_width = 0.2;
    double window_lo = 0.5;
    double window_hi = 1.0;
    int rounds = 2;
    double dbscan_eps = 0.0; // 2 * voxel_size
    int dbscan_min_pts = 10;
    double coverage_eps = 0.01;
    double region_floor = 0.3;

    double match_radius = 0.0; // voxel_size
    double macc_cutoff = 0.25;

    double oracle_timeout = 30.0;
    int oracle_retries = 2;
    std::uint64_t seed = 0;
    int workers = 0; // 0 = all cores

    /// Sets one key from text. Throws on unknown keys or unparsable values.
    void set(const std::string &key, const std::string &value);
    /// Reads `key = value` lines; '#' starts a comment.
    void merge_file(const std::filesystem::path &path);
    void validate() const;

    double effective_downsample_step() const { return downsample_step > 0.0 ? downsample_step : voxel_size; }
    double effective_overlap_radius() const { return overlap_radius > 0.0 ? overlap_radius : voxel_size / 2.0; }
    double effective_dbscan_eps() const { return dbscan_eps > 0.0 ? dbscan_eps : 2.0 * voxel_size; }
    double effective_match_radius() const { return match_radius > 0.0 ? match_radius : voxel_size; }

    FusionConfig fusion() const;
    QueryConfig query() const;

    /// Canonical `key=value` listing of every key, in a fixed order.
    std::string to_string() const;
    static const std::vector<std::string> &keys();
};

} // namespace splatfuse
