// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include "splatfuse/sparse_grid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>

#include "binary_io.hpp"

namespace splatfuse {

VoxelKey world_to_voxel(const Vec3 &p, double voxel_size) {
    return VoxelKey{static_cast<std::int32_t>(std::floor(p.x() / voxel_size)),
                    static_cast<std::int32_t>(std::floor(p.y() / voxel_size)),
                    static_cast<std::int32_t>(std::floor(p.z() / voxel_size))};
}

Vec3 voxel_center(const VoxelKey &key, double voxel_size) {
    return Vec3((key.i + 0.5) * voxel_size, (key.j + 0.5) * voxel_size, (key.k + 0.5) * voxel_size);
}

std::vector<VoxelKey> dda_traverse(const Vec3 &origin, const Vec3 &dir, double t_min, double t_max,
                                   double voxel_size) {
    if (!(voxel_size > 0.0)) {
        fail("dda_traverse: voxel size must be positive");
    }
    if (!(t_min <= t_max)) {
        fail("dda_traverse: t_min must not exceed t_max");
    }
    const double norm = dir.norm();
    if (!(norm > 0.0) || !dir.allFinite()) {
        fail("dda_traverse: ray direction has zero norm");
    }
    if (std::abs(norm - 1.0) > 1e-6) {
        fail("dda_traverse: ray direction must be unit length");
    }

    VoxelKey current = world_to_voxel(origin + t_min * dir, voxel_size);
    const VoxelKey last = world_to_voxel(origin + t_max * dir, voxel_size);

    std::array<int, 3> step{};
    std::array<std::int64_t, 3> remaining{};
    std::array<double, 3> t_next{};
    const auto boundary_t = [&](int axis) {
        const double plane = (current[axis] + (step[axis] > 0 ? 1 : 0)) * voxel_size;
        return (plane - origin[axis]) / dir[axis];
    };
    std::int64_t total = 0;
    for (int axis = 0; axis < 3; ++axis) {
        remaining[axis] = std::abs(static_cast<std::int64_t>(last[axis]) - current[axis]);
        step[axis] = dir[axis] > 0.0 ? 1 : (dir[axis] < 0.0 ? -1 : 0);
        if (remaining[axis] > 0 && step[axis] == 0) {
            // Only reachable through rounding in the endpoint evaluation.
            remaining[axis] = 0;
        }
        t_next[axis] = step[axis] != 0 ? boundary_t(axis) : std::numeric_limits<double>::infinity();
        total += remaining[axis];
    }

    std::vector<VoxelKey> keys;
    keys.reserve(static_cast<std::size_t>(total) + 1);
    keys.push_back(current);
    while (remaining[0] > 0 || remaining[1] > 0 || remaining[2] > 0) {
        double t = std::numeric_limits<double>::infinity();
        for (int axis = 0; axis < 3; ++axis) {
            if (remaining[axis] > 0) {
                t = std::min(t, t_next[axis]);
            }
        }
        for (int axis = 0; axis < 3; ++axis) {
            if (remaining[axis] > 0 && t_next[axis] == t) {
                current[axis] += step[axis];
                --remaining[axis];
                t_next[axis] = boundary_t(axis);
            }
        }
        keys.push_back(current);
    }
    return keys;
}

SparseVoxelGrid::SparseVoxelGrid(double voxel_size, double truncation, std::size_t feature_dim,
                                 double max_weight)
    : voxel_size_(voxel_size), truncation_(truncation), max_weight_(max_weight),
      feature_dim_(feature_dim) {
    if (!(voxel_size > 0.0)) {
        fail("voxel size must be positive");
    }
    if (!(truncation >= voxel_size)) {
        fail("truncation must be at least the voxel size");
    }
    if (!(max_weight >= 1.0)) {
        fail("max weight must be at least 1");
    }
}

VoxelIndex SparseVoxelGrid::get_or_insert(const VoxelKey &key) {
    const auto [it, inserted] = index_.try_emplace(key, static_cast<VoxelIndex>(voxels_.size()));
    if (inserted) {
        if (voxels_.size() >= std::numeric_limits<VoxelIndex>::max()) {
            fail("voxel grid is full");
        }
        Voxel v;
        v.key = key;
        v.tsdf = static_cast<float>(truncation_);
        voxels_.push_back(std::move(v));
        features_.resize(features_.size() + feature_dim_, 0.0f);
    }
    return it->second;
}

std::optional<VoxelIndex> SparseVoxelGrid::find(const VoxelKey &key) const {
    const auto it = index_.find(key);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::span<float> SparseVoxelGrid::feature(VoxelIndex idx) {
    return {features_.data() + static_cast<std::size_t>(idx) * feature_dim_, feature_dim_};
}

std::span<const float> SparseVoxelGrid::feature(VoxelIndex idx) const {
    return {features_.data() + static_cast<std::size_t>(idx) * feature_dim_, feature_dim_};
}

void SparseVoxelGrid::ensure_feature_dim(std::size_t dim) {
    if (dim == feature_dim_) {
        return;
    }
    if (feature_dim_ != 0) {
        fail("embedding dimension " + std::to_string(dim) + " does not match map dimension " +
             std::to_string(feature_dim_));
    }
    feature_dim_ = dim;
    features_.assign(voxels_.size() * dim, 0.0f);
}

void SparseVoxelGrid::save(std::ostream &out) const {
    using detail::put;
    out.write("GSFG", 4);
    put<std::uint32_t>(out, kGridSnapshotVersion);
    put<double>(out, voxel_size_);
    put<double>(out, truncation_);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(feature_dim_));
    put<std::uint64_t>(out, voxels_.size());
    for (VoxelIndex idx = 0; idx < voxels_.size(); ++idx) {
        const Voxel &v = voxels_[idx];
        put(out, v.key.i);
        put(out, v.key.j);
        put(out, v.key.k);
        put(out, v.weight);
        put(out, v.tsdf);
        put(out, v.confidence);
        const auto f = feature(idx);
        out.write(reinterpret_cast<const char *>(f.data()),
                  static_cast<std::streamsize>(f.size() * sizeof(float)));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(v.gaussians.size()));
        for (GaussianId id : v.gaussians) {
            put<std::uint64_t>(out, id);
        }
    }
    if (!out) {
        fail_io("failed to write grid snapshot");
    }
}

SparseVoxelGrid SparseVoxelGrid::load(std::istream &in, double max_weight) {
    using detail::get;
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "GSFG", 4) != 0) {
        fail_io("not a grid snapshot (bad magic)");
    }
    const auto version = get<std::uint32_t>(in, "version");
    if (version != kGridSnapshotVersion) {
        fail_io("unsupported grid snapshot version " + std::to_string(version));
    }
    const auto s = get<double>(in, "voxel size");
    const auto trunc = get<double>(in, "truncation");
    const auto dim = get<std::uint32_t>(in, "feature dimension");
    const auto count = get<std::uint64_t>(in, "voxel count");
    SparseVoxelGrid grid(s, trunc, dim, max_weight);
    grid.voxels_.reserve(count);
    for (std::uint64_t n = 0; n < count; ++n) {
        VoxelKey key;
        key.i = get<std::int32_t>(in, "voxel key");
        key.j = get<std::int32_t>(in, "voxel key");
        key.k = get<std::int32_t>(in, "voxel key");
        const VoxelIndex idx = grid.get_or_insert(key);
        if (idx != n) {
            fail_io("duplicate voxel key in snapshot");
        }
        Voxel &v = grid.voxels_[idx];
        v.weight = get<float>(in, "weight");
        v.tsdf = get<float>(in, "tsdf");
        v.confidence = get<float>(in, "confidence");
        auto f = grid.feature(idx);
        if (!in.read(reinterpret_cast<char *>(f.data()),
                     static_cast<std::streamsize>(f.size() * sizeof(float)))) {
            fail_io("truncated input while reading voxel feature");
        }
        const auto n_ids = get<std::uint32_t>(in, "gaussian count");
        v.gaussians.resize(n_ids);
        for (auto &id : v.gaussians) {
            id = get<std::uint64_t>(in, "gaussian id");
        }
    }
    return grid;
}

} // namespace splatfuse
