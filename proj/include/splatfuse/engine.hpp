// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
//
// The mapping pipeline and its on-disk map directory:
//   grid.gsfg        voxel snapshot
//   gaussians.ply    primitives
//   keyframes.json   keyframe poses and intrinsics
#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "splatfuse/config.hpp"
#include "splatfuse/dataset.hpp"
#include "splatfuse/gaussian_map.hpp"
#include "splatfuse/query.hpp"
#include "splatfuse/sparse_grid.hpp"

namespace splatfuse {

struct FrameReport {
    FrameId frame = 0;
    bool keyframe = false;
    IntegrationStats integration;
    std::size_t samples = 0;
    std::size_t admitted = 0;
    std::size_t pruned = 0;
};

struct MapStats {
    std::size_t frames = 0;
    std::size_t keyframes = 0;
    std::size_t voxels = 0;
    std::size_t primitives = 0;
    std::size_t admitted = 0;
    std::size_t pruned = 0;
};

class Engine {
public:
    explicit Engine(EngineConfig config);

    /// Integrates every frame; keyframes additionally add primitives, fuse semantics and
    /// prune, in that order.
    FrameReport process_frame(const Frame &frame, const CameraIntrinsics &intrinsics);

    const EngineConfig &config() const { return config_; }
    const SparseVoxelGrid &grid() const { return grid_; }
    SparseVoxelGrid &grid() { return grid_; }
    const GaussianMap &gaussians() const { return gaussians_; }
    GaussianMap &gaussians() { return gaussians_; }
    const std::vector<Keyframe> &keyframes() const { return keyframes_; }
    const MapStats &stats() const { return stats_; }

    QueryResult adaptive(std::span<const float> text, std::string_view query_text, const ThresholdOracle &oracle,
                         RenderSink *sink = nullptr) const;
    QueryResult fixed(std::span<const float> text, std::string_view query_text, double threshold) const;

    void save(const std::filesystem::path &dir) const;
    /// The grid's voxel size and truncation come from the snapshot; other settings from
    /// `config`.
    static Engine load(const std::filesystem::path &dir, EngineConfig config);

private:
    EngineConfig config_;
    SparseVoxelGrid grid_;
    GaussianMap gaussians_;
    std::vector<Keyframe> keyframes_;
    MapStats stats_;
};

using FrameCallback = std::function<void(const FrameReport &)>;

/// Runs every frame of `dataset` through a fresh engine. Throws "no frames" on an empty set.
Engine build_map(const DatasetReader &dataset, const EngineConfig &config, const FrameCallback &on_frame = {});

} // namespace splatfuse
