// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
//
// Hash-indexed sparse voxel storage. Every voxel carries the TSDF state
// (weight, signed distance), the fused semantic state (confidence, feature)
// and the ids of the Gaussian primitives whose mean lies inside it.
#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "splatfuse/common.hpp"

namespace splatfuse {

struct VoxelKey {
    std::int32_t i = 0;
    std::int32_t j = 0;
    std::int32_t k = 0;

    auto operator<=>(const VoxelKey &) const = default;

    std::int32_t operator[](int axis) const { return axis == 0 ? i : (axis == 1 ? j : k); }
    std::int32_t &operator[](int axis) { return axis == 0 ? i : (axis == 1 ? j : k); }

    template <typename H>
    friend H AbslHashValue(H h, const VoxelKey &key) {
        return H::combine(std::move(h), key.i, key.j, key.k);
    }
};

/// floor(p / voxel_size) componentwise. Points on a boundary belong to the upper cell's
/// lower face, i.e. -0.05 with s = 0.05 maps to -1.
VoxelKey world_to_voxel(const Vec3 &p, double voxel_size);

Vec3 voxel_center(const VoxelKey &key, double voxel_size);

/// Voxels crossed by origin + t * dir for t in [t_min, t_max], in increasing t, each once.
///
/// Incremental grid walk (Amanatides-Woo). The first and last keys are the voxels that
/// contain the segment endpoints. When the ray leaves a cell through an edge or corner
/// (several axes cross at the same t) all of those axes advance in one step, so no
/// zero-length cell is reported. `dir` must be unit length.
std::vector<VoxelKey> dda_traverse(const Vec3 &origin, const Vec3 &dir, double t_min, double t_max,
                                   double voxel_size);

using VoxelIndex = std::uint32_t;

struct Voxel {
    VoxelKey key;
    float weight = 0.0f;
    float tsdf = 0.0f;
    float confidence = 0.0f;
    std::vector<GaussianId> gaussians;
};

class SparseVoxelGrid {
public:
    /// `feature_dim` may be zero until the first semantic observation fixes it.
    SparseVoxelGrid(double voxel_size, double truncation, std::size_t feature_dim = 0,
                    double max_weight = 64.0);

    /// Existing voxel, or a new one initialised to {w=0, tsdf=+trunc, c=0, f=0, no gaussians}.
    VoxelIndex get_or_insert(const VoxelKey &key);
    std::optional<VoxelIndex> find(const VoxelKey &key) const;

    Voxel &voxel(VoxelIndex idx) { return voxels_[idx]; }
    const Voxel &voxel(VoxelIndex idx) const { return voxels_[idx]; }
    std::span<float> feature(VoxelIndex idx);
    std::span<const float> feature(VoxelIndex idx) const;

    const std::vector<Voxel> &voxels() const { return voxels_; }
    std::size_t size() const { return voxels_.size(); }

    double voxel_size() const { return voxel_size_; }
    double truncation() const { return truncation_; }
    double max_weight() const { return max_weight_; }
    std::size_t feature_dim() const { return feature_dim_; }

    /// Fixes the semantic dimension. A no-op if it already matches; throws if a different
    /// dimension was fixed before.
    void ensure_feature_dim(std::size_t dim);

    /// Little-endian snapshot: header {"GSFG", version u32, s f64, trunc f64, D u32,
    /// count u64}, then per voxel {i j k i32, w f32, tsdf f32, c f32, f f32 x D,
    /// n u32, ids u64 x n}.
    void save(std::ostream &out) const;
    static SparseVoxelGrid load(std::istream &in, double max_weight = 64.0);

private:
    double voxel_size_;
    double truncation_;
    double max_weight_;
    std::size_t feature_dim_;
    absl::flat_hash_map<VoxelKey, VoxelIndex> index_;
    std::vector<Voxel> voxels_;
    std::vector<float> features_;
};

inline constexpr std::uint32_t kGridSnapshotVersion = 1;

} // namespace splatfuse
