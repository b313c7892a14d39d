// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
//
// The Gaussian primitive set and its coupling to the voxel grid: every live primitive
// is listed in exactly one voxel (its home voxel, the voxel containing its mean).
#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "splatfuse/camera.hpp"
#include "splatfuse/fusion.hpp"
#include "splatfuse/sparse_grid.hpp"

namespace splatfuse {

struct GaussianPrimitive {
    GaussianId id = 0;
    Vec3 mean = Vec3::Zero();
    Mat3 covariance = Mat3::Identity();
    float opacity = 0.5f;
    Vec3f color = Vec3f::Zero();
    VoxelKey home_voxel;
    FrameId source_keyframe = -1;
};

struct Keyframe {
    FrameId frame_id = 0;
    Pose camera_to_world = Pose::Identity();
    CameraIntrinsics intrinsics;
};

bool is_keyframe(FrameId frame_index, std::int64_t interval);

inline constexpr float kInitialOpacity = 0.5f;
inline constexpr double kCovarianceFloor = 1e-6;

/// One primitive per sample. The covariance is the sample covariance of the
/// `k_neighbors` nearest other samples, with eigenvalues floored at 1e-6 m^2. With
/// fewer than k_neighbors + 1 samples every primitive falls back to (s/2)^2 I.
/// Returned primitives have id 0 and are not yet part of any map.
std::vector<GaussianPrimitive> init_gaussians(std::span<const DepthSample> samples, int k_neighbors,
                                              double voxel_size, FrameId source_keyframe);

class GaussianMap {
public:
    explicit GaussianMap(double overlap_radius);

    /// Admits `primitive` iff its home voxel exists with tsdf > admit_tsdf and no live
    /// primitive mean lies within the overlap radius. On success the primitive gets a
    /// fresh id, is stored, and is appended to the home voxel's list.
    std::optional<GaussianId> admit(GaussianPrimitive primitive, SparseVoxelGrid &grid,
                                    double admit_tsdf);

    /// Removes every primitive whose home voxel has tsdf < prune_tsdf. Returns the count.
    std::size_t prune(SparseVoxelGrid &grid, double prune_tsdf);

    /// Inserts without the admission gates, keeping `primitive.id`. Used when loading.
    void insert(GaussianPrimitive primitive, SparseVoxelGrid &grid);
    void remove(GaussianId id, SparseVoxelGrid &grid);
    /// Replaces mean and covariance, moving the id between voxel lists when the home
    /// voxel changes.
    void update_shape(GaussianId id, const Vec3 &mean, const Mat3 &covariance, SparseVoxelGrid &grid);

    const GaussianPrimitive *find(GaussianId id) const;
    bool contains(GaussianId id) const { return primitives_.contains(id); }
    const std::map<GaussianId, GaussianPrimitive> &primitives() const { return primitives_; }
    std::size_t size() const { return primitives_.size(); }
    double overlap_radius() const { return overlap_radius_; }
    GaussianId next_id() const { return next_id_; }

    /// True if some live mean lies strictly within the overlap radius of `p`.
    bool overlaps(const Vec3 &p) const;

private:
    VoxelKey bucket_of(const Vec3 &p) const;
    void bucket_insert(GaussianId id, const Vec3 &p);
    void bucket_erase(GaussianId id, const Vec3 &p);
    void detach_from_voxel(const GaussianPrimitive &g, SparseVoxelGrid &grid);

    double overlap_radius_;
    GaussianId next_id_ = 1;
    std::map<GaussianId, GaussianPrimitive> primitives_;
    absl::flat_hash_map<VoxelKey, std::vector<GaussianId>> buckets_;
};

/// Union of the voxel lists of `keys` (missing keys ignored), sorted and deduplicated.
std::vector<GaussianId> primitives_in_voxels(const SparseVoxelGrid &grid, std::span<const VoxelKey> keys);

/// Human-readable violations of the voxel <-> primitive invariant; empty when consistent.
std::vector<std::string> check_consistency(const SparseVoxelGrid &grid, const GaussianMap &map);

/// Binary little-endian PLY: x y z (f32), red green blue (u8), opacity (f32),
/// cov_xx cov_xy cov_xz cov_yy cov_yz cov_zz (f32), id (u32).
void write_ply(std::ostream &out, const GaussianMap &map);
void write_ply(std::ostream &out, const GaussianMap &map, std::span<const GaussianId> ids);
std::vector<GaussianPrimitive> read_ply(std::istream &in, double voxel_size);

} // namespace splatfuse
