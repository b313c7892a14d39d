// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
//
// Open-vocabulary object queries with adaptive similarity thresholds:
//   1. seed voxels above a high threshold and cluster their Gaussians (DBSCAN);
//   2. pick the keyframes that see each cluster best;
//   3. render the cluster at five thresholds sampled from a window;
//   4. let an oracle choose per viewpoint, take the median, re-centre the window, repeat.
#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "splatfuse/dbscan.hpp"
#include "splatfuse/gaussian_map.hpp"
#include "splatfuse/oracle.hpp"
#include "splatfuse/similarity.hpp"

namespace splatfuse {

struct QueryConfig {
    double seed_threshold = 0.8;
    int keyframes_per_cluster = 3;
    double window_half_width = 0.2;
    double window_lo = 0.5;
    double window_hi = 1.0;
    int rounds = 2;
    double dbscan_eps = 0.1;
    int dbscan_min_pts = 10;
    double coverage_eps = 0.01;
    /// Lowest similarity a voxel may have and still belong to a cluster's region.
    double region_floor = 0.3;
    Vec3f background = Vec3f(0.5f, 0.5f, 0.5f);
};

struct ThresholdWindow {
    double lo = 0.5;
    double hi = 1.0;

    ThresholdWindow() = default;
    ThresholdWindow(double lo_, double hi_);
    double width() const { return hi - lo; }
    /// [center - half, center + half] intersected with [0, 1].
    static ThresholdWindow around(double center, double half_width);
};

/// {lo, lo + d, lo + 2d, lo + 3d, hi} with d = (hi - lo) / 4.
std::array<double, 5> sample_thresholds(const ThresholdWindow &window);

struct Cluster {
    std::vector<GaussianId> members;
    Vec3 centroid = Vec3::Zero();
    /// Semantic voxels making up the cluster's region: flood-filled (26-connected) from
    /// the members' home voxels through voxels with similarity >= region_floor.
    std::vector<VoxelKey> region;
};

struct ScoredKeyframe {
    const Keyframe *keyframe = nullptr;
    double coverage = 0.0;
    double distance = 0.0;
    double score = 0.0;
};

/// Visibility-over-distance score Cov / (d + eps).
double keyframe_score(double coverage, double distance, double eps);

/// Top-u keyframes by score (ties by frame id), restricted to keyframes with coverage > 0.
std::vector<ScoredKeyframe> score_keyframes(const Cluster &cluster, const GaussianMap &map,
                                            std::span<const Keyframe> keyframes, int u, double eps);

/// Fraction of `means` that project inside the image with positive depth.
double coverage(std::span<const Vec3> means, const Keyframe &keyframe);

/// Primitives homed in region voxels whose normalized similarity is >= threshold.
std::vector<GaussianId> select_in_region(const SparseVoxelGrid &grid, const SimilarityField &field,
                                         std::span<const VoxelKey> region, double threshold);

/// Lower median.
double lower_median(std::vector<double> values);

struct RoundRecord {
    ThresholdWindow window;
    std::array<double, 5> thresholds{};
    std::vector<FrameId> viewpoints;
    std::vector<double> per_view_best; // same order as viewpoints; NaN for skipped views
    double chosen = 0.0;
};

/// Invoked for every render made during evaluation (used to dump candidate grids).
struct RenderSink {
    virtual ~RenderSink() = default;
    virtual void on_render(std::size_t cluster, std::size_t round, FrameId viewpoint, std::size_t candidate,
                           double threshold, const RenderOutput &render) = 0;
};

/// Renders the region's primitives at every threshold from every viewpoint, asks the
/// oracle for each viewpoint, and returns the lower median of the per-viewpoint choices.
/// Viewpoints whose oracle call fails are skipped; if all fail, throws ErrorKind::Oracle.
double evaluate_round(const SparseVoxelGrid &grid, const GaussianMap &map, const Cluster &cluster,
                      const SimilarityField &field, std::span<const double> thresholds,
                      std::span<const ScoredKeyframe> viewpoints, const ThresholdOracle &oracle,
                      std::string_view query_text, const QueryConfig &config, RoundRecord *record = nullptr,
                      RenderSink *sink = nullptr, std::size_t cluster_index = 0, std::size_t round_index = 0);

struct ObjectDescriptor {
    Vec3 center = Vec3::Zero();
    Vec3 dims = Vec3::Zero();   // extents along principal axes, descending
    Vec3 angles = Vec3::Zero(); // roll, pitch, yaw of the principal frame
    Mat3 axes = Mat3::Identity();
};

struct ClusterResult {
    std::size_t cluster_id = 0;
    std::vector<GaussianId> selected;
    double threshold = 0.0;
    ObjectDescriptor descriptor;
    std::vector<FrameId> viewpoints;
    std::vector<RoundRecord> rounds;
    Cluster cluster;
};

struct QueryResult {
    std::string query;
    std::string strategy; // "adaptive" or "fixed"
    std::vector<ClusterResult> clusters;
    std::vector<std::string> warnings;

    /// Union of all clusters' selections, sorted.
    std::vector<GaussianId> all_selected() const;
};

/// Stage 1: seeds at `threshold`, Gaussians in those voxels, DBSCAN over their means.
/// Throws ErrorKind::NoMatch when nothing survives.
std::vector<Cluster> seed_clusters(const SparseVoxelGrid &grid, const GaussianMap &map,
                                   const SimilarityField &field, double threshold, const QueryConfig &config);

QueryResult adaptive_query(const SparseVoxelGrid &grid, const GaussianMap &map,
                           std::span<const Keyframe> keyframes, std::span<const float> text_embedding,
                           std::string_view query_text, const ThresholdOracle &oracle,
                           const QueryConfig &config, RenderSink *sink = nullptr);

/// Single selection at `threshold`; DBSCAN still discards noise Gaussians.
QueryResult fixed_query(const SparseVoxelGrid &grid, const GaussianMap &map,
                        std::span<const float> text_embedding, std::string_view query_text,
                        double threshold, const QueryConfig &config);

} // namespace splatfuse
