// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include "splatfuse/gaussian_map.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <absl/container/flat_hash_set.h>
#include <tbb/parallel_for.h>

#include "binary_io.hpp"

namespace splatfuse {

bool is_keyframe(FrameId frame_index, std::int64_t interval) {
    if (interval < 1) {
        fail("keyframe interval must be at least 1");
    }
    return frame_index % interval == 0;
}

namespace {

/// Uniform-grid k-nearest-neighbour search over a fixed point set.
class NeighborGrid {
public:
    NeighborGrid(std::span<const DepthSample> samples, double cell) : samples_(samples), cell_(cell) {
        for (std::size_t n = 0; n < samples.size(); ++n) {
            cells_[world_to_voxel(samples[n].point, cell)].push_back(n);
        }
    }

    /// Indices of the k nearest samples other than `self`, ordered by (distance, index).
    std::vector<std::size_t> nearest(std::size_t self, std::size_t k) const {
        const Vec3 &q = samples_[self].point;
        const VoxelKey center = world_to_voxel(q, cell_);
        std::vector<std::pair<double, std::size_t>> found;
        for (int ring = 0;; ++ring) {
            for (int dz = -ring; dz <= ring; ++dz) {
                for (int dy = -ring; dy <= ring; ++dy) {
                    for (int dx = -ring; dx <= ring; ++dx) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) {
                            continue;
                        }
                        const auto it = cells_.find(VoxelKey{center.i + dx, center.j + dy, center.k + dz});
                        if (it == cells_.end()) {
                            continue;
                        }
                        for (std::size_t n : it->second) {
                            if (n != self) {
                                found.emplace_back((samples_[n].point - q).squaredNorm(), n);
                            }
                        }
                    }
                }
            }
            if (found.size() >= k) {
                std::nth_element(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(k - 1),
                                 found.end());
                const double covered = ring * cell_;
                if (found[k - 1].first <= covered * covered) {
                    break;
                }
            }
        }
        std::sort(found.begin(), found.end());
        std::vector<std::size_t> out;
        out.reserve(k);
        for (std::size_t n = 0; n < k; ++n) {
            out.push_back(found[n].second);
        }
        return out;
    }

private:
    std::span<const DepthSample> samples_;
    double cell_;
    absl::flat_hash_map<VoxelKey, std::vector<std::size_t>> cells_;
};

Mat3 floored_covariance(const Mat3 &cov) {
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Eigen::Vector3d values = eig.eigenvalues().cwiseMax(kCovarianceFloor);
    Mat3 out = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

} // namespace

std::vector<GaussianPrimitive> init_gaussians(std::span<const DepthSample> samples, int k_neighbors,
                                              double voxel_size, FrameId source_keyframe) {
    if (samples.empty()) {
        fail("init_gaussians: no samples");
    }
    if (k_neighbors < 4) {
        fail("init_gaussians: k_neighbors must be at least 4");
    }
    std::vector<GaussianPrimitive> out(samples.size());
    const bool enough = samples.size() >= static_cast<std::size_t>(k_neighbors) + 1;
    const Mat3 isotropic = Mat3::Identity() * (0.25 * voxel_size * voxel_size);
    std::optional<NeighborGrid> grid;
    if (enough) {
        grid.emplace(samples, voxel_size);
    }
    tbb::parallel_for(std::size_t{0}, samples.size(), [&](std::size_t n) {
        GaussianPrimitive &g = out[n];
        g.mean = samples[n].point;
        g.color = samples[n].color;
        g.opacity = kInitialOpacity;
        g.home_voxel = world_to_voxel(g.mean, voxel_size);
        g.source_keyframe = source_keyframe;
        if (!enough) {
            g.covariance = isotropic;
            return;
        }
        const auto neighbors = grid->nearest(n, static_cast<std::size_t>(k_neighbors));
        Vec3 mean = Vec3::Zero();
        for (std::size_t m : neighbors) {
            mean += samples[m].point;
        }
        mean /= static_cast<double>(neighbors.size());
        Mat3 cov = Mat3::Zero();
        for (std::size_t m : neighbors) {
            const Vec3 d = samples[m].point - mean;
            cov += d * d.transpose();
        }
        cov /= static_cast<double>(neighbors.size());
        g.covariance = floored_covariance(cov);
    });
    return out;
}

GaussianMap::GaussianMap(double overlap_radius) : overlap_radius_(overlap_radius) {
    if (!(overlap_radius > 0.0)) {
        fail("overlap radius must be positive");
    }
}

VoxelKey GaussianMap::bucket_of(const Vec3 &p) const { return world_to_voxel(p, overlap_radius_); }

void GaussianMap::bucket_insert(GaussianId id, const Vec3 &p) { buckets_[bucket_of(p)].push_back(id); }

void GaussianMap::bucket_erase(GaussianId id, const Vec3 &p) {
    const auto it = buckets_.find(bucket_of(p));
    if (it == buckets_.end()) {
        return;
    }
    std::erase(it->second, id);
    if (it->second.empty()) {
        buckets_.erase(it);
    }
}

bool GaussianMap::overlaps(const Vec3 &p) const {
    const VoxelKey b = bucket_of(p);
    const double r2 = overlap_radius_ * overlap_radius_;
    for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const auto it = buckets_.find(VoxelKey{b.i + dx, b.j + dy, b.k + dz});
                if (it == buckets_.end()) {
                    continue;
                }
                for (GaussianId id : it->second) {
                    if ((primitives_.at(id).mean - p).squaredNorm() < r2) {
                        return true;
                    }
                }
            }
        }
    }
    return false;
}

std::optional<GaussianId> GaussianMap::admit(GaussianPrimitive primitive, SparseVoxelGrid &grid,
                                             double admit_tsdf) {
    primitive.home_voxel = world_to_voxel(primitive.mean, grid.voxel_size());
    const auto home = grid.find(primitive.home_voxel);
    if (!home || !(grid.voxel(*home).tsdf > admit_tsdf)) {
        return std::nullopt;
    }
    if (overlaps(primitive.mean)) {
        return std::nullopt;
    }
    primitive.id = next_id_++;
    const GaussianId id = primitive.id;
    grid.voxel(*home).gaussians.push_back(id);
    bucket_insert(id, primitive.mean);
    primitives_.emplace(id, std::move(primitive));
    return id;
}

void GaussianMap::insert(GaussianPrimitive primitive, SparseVoxelGrid &grid) {
    if (primitive.id == 0 || primitives_.contains(primitive.id)) {
        fail("insert: primitive id must be non-zero and unused");
    }
    primitive.home_voxel = world_to_voxel(primitive.mean, grid.voxel_size());
    const VoxelIndex home = grid.get_or_insert(primitive.home_voxel);
    auto &list = grid.voxel(home).gaussians;
    if (std::find(list.begin(), list.end(), primitive.id) == list.end()) {
        list.push_back(primitive.id);
    }
    next_id_ = std::max(next_id_, primitive.id + 1);
    bucket_insert(primitive.id, primitive.mean);
    primitives_.emplace(primitive.id, std::move(primitive));
}

void GaussianMap::detach_from_voxel(const GaussianPrimitive &g, SparseVoxelGrid &grid) {
    if (const auto home = grid.find(g.home_voxel)) {
        std::erase(grid.voxel(*home).gaussians, g.id);
    }
}

void GaussianMap::remove(GaussianId id, SparseVoxelGrid &grid) {
    const auto it = primitives_.find(id);
    if (it == primitives_.end()) {
        fail("remove: unknown gaussian id " + std::to_string(id));
    }
    detach_from_voxel(it->second, grid);
    bucket_erase(id, it->second.mean);
    primitives_.erase(it);
}

void GaussianMap::update_shape(GaussianId id, const Vec3 &mean, const Mat3 &covariance,
                               SparseVoxelGrid &grid) {
    const auto it = primitives_.find(id);
    if (it == primitives_.end()) {
        fail("update_shape: unknown gaussian id " + std::to_string(id));
    }
    GaussianPrimitive &g = it->second;
    bucket_erase(id, g.mean);
    const VoxelKey home = world_to_voxel(mean, grid.voxel_size());
    if (home != g.home_voxel) {
        detach_from_voxel(g, grid);
        grid.voxel(grid.get_or_insert(home)).gaussians.push_back(id);
        g.home_voxel = home;
    }
    g.mean = mean;
    g.covariance = covariance;
    bucket_insert(id, mean);
}

std::size_t GaussianMap::prune(SparseVoxelGrid &grid, double prune_tsdf) {
    std::vector<GaussianId> doomed;
    for (const Voxel &v : grid.voxels()) {
        if (v.tsdf < prune_tsdf) {
            doomed.insert(doomed.end(), v.gaussians.begin(), v.gaussians.end());
        }
    }
    for (GaussianId id : doomed) {
        remove(id, grid);
    }
    return doomed.size();
}

const GaussianPrimitive *GaussianMap::find(GaussianId id) const {
    const auto it = primitives_.find(id);
    return it == primitives_.end() ? nullptr : &it->second;
}

std::vector<GaussianId> primitives_in_voxels(const SparseVoxelGrid &grid, std::span<const VoxelKey> keys) {
    std::vector<GaussianId> ids;
    for (const VoxelKey &key : keys) {
        if (const auto idx = grid.find(key)) {
            const auto &list = grid.voxel(*idx).gaussians;
            ids.insert(ids.end(), list.begin(), list.end());
        }
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

std::vector<std::string> check_consistency(const SparseVoxelGrid &grid, const GaussianMap &map) {
    std::vector<std::string> problems;
    const double s = grid.voxel_size();
    for (const auto &[id, g] : map.primitives()) {
        if (g.id != id) {
            problems.push_back("primitive stored under id " + std::to_string(id) + " carries id " +
                               std::to_string(g.id));
        }
        if (world_to_voxel(g.mean, s) != g.home_voxel) {
            problems.push_back("primitive " + std::to_string(id) + " home voxel does not contain its mean");
        }
        const auto home = grid.find(g.home_voxel);
        if (!home) {
            problems.push_back("primitive " + std::to_string(id) + " home voxel missing from grid");
            continue;
        }
        const auto &list = grid.voxel(*home).gaussians;
        if (std::count(list.begin(), list.end(), id) != 1) {
            problems.push_back("primitive " + std::to_string(id) + " not listed exactly once in its home voxel");
        }
    }
    for (const Voxel &v : grid.voxels()) {
        for (GaussianId id : v.gaussians) {
            const GaussianPrimitive *g = map.find(id);
            if (!g) {
                problems.push_back("voxel lists dead primitive " + std::to_string(id));
            } else if (g->home_voxel != v.key) {
                problems.push_back("voxel lists primitive " + std::to_string(id) + " homed elsewhere");
            }
        }
    }
    return problems;
}

namespace {

constexpr const char *kPlyProperties[] = {
    "property float x",         "property float y",      "property float z",
    "property uchar red",       "property uchar green",  "property uchar blue",
    "property float opacity",   "property float cov_xx", "property float cov_xy",
    "property float cov_xz",    "property float cov_yy", "property float cov_yz",
    "property float cov_zz",    "property uint id",
};

std::uint8_t to_u8(float c) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0f, 1.0f) * 255.0f));
}

} // namespace

void write_ply(std::ostream &out, const GaussianMap &map, std::span<const GaussianId> ids) {
    using detail::put;
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << ids.size() << "\n";
    for (const char *prop : kPlyProperties) {
        out << prop << "\n";
    }
    out << "end_header\n";
    for (GaussianId id : ids) {
        const GaussianPrimitive *g = map.find(id);
        if (!g) {
            fail("write_ply: unknown gaussian id " + std::to_string(id));
        }
        if (id > 0xffffffffULL) {
            fail("write_ply: gaussian id exceeds the u32 range of the PLY schema");
        }
        for (int a = 0; a < 3; ++a) {
            put<float>(out, static_cast<float>(g->mean[a]));
        }
        for (int a = 0; a < 3; ++a) {
            put<std::uint8_t>(out, to_u8(g->color[a]));
        }
        put<float>(out, g->opacity);
        const Mat3 &c = g->covariance;
        for (const double v : {c(0, 0), c(0, 1), c(0, 2), c(1, 1), c(1, 2), c(2, 2)}) {
            put<float>(out, static_cast<float>(v));
        }
        put<std::uint32_t>(out, static_cast<std::uint32_t>(id));
    }
    if (!out) {
        fail_io("failed to write PLY");
    }
}

void write_ply(std::ostream &out, const GaussianMap &map) {
    std::vector<GaussianId> ids;
    ids.reserve(map.size());
    for (const auto &[id, g] : map.primitives()) {
        ids.push_back(id);
    }
    write_ply(out, map, ids);
}

std::vector<GaussianPrimitive> read_ply(std::istream &in, double voxel_size) {
    using detail::get;
    std::string line;
    std::getline(in, line);
    if (line != "ply") {
        fail_io("not a PLY file");
    }
    std::size_t count = 0;
    std::vector<std::string> props;
    bool binary = false;
    while (std::getline(in, line)) {
        if (line == "end_header") {
            break;
        }
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            binary = fmt == "binary_little_endian";
        } else if (word == "element") {
            std::string name;
            ls >> name >> count;
            if (name != "vertex") {
                fail_io("unexpected PLY element " + name);
            }
        } else if (word == "property") {
            props.push_back(line);
        }
    }
    if (!binary) {
        fail_io("only binary little-endian PLY is supported");
    }
    if (props.size() != std::size(kPlyProperties) ||
        !std::equal(props.begin(), props.end(), std::begin(kPlyProperties))) {
        fail_io("PLY vertex layout does not match the Gaussian schema");
    }
    std::vector<GaussianPrimitive> out(count);
    for (auto &g : out) {
        for (int a = 0; a < 3; ++a) {
            g.mean[a] = get<float>(in, "position");
        }
        for (int a = 0; a < 3; ++a) {
            g.color[a] = static_cast<float>(get<std::uint8_t>(in, "color")) / 255.0f;
        }
        g.opacity = get<float>(in, "opacity");
        double c[6];
        for (double &v : c) {
            v = get<float>(in, "covariance");
        }
        g.covariance << c[0], c[1], c[2], c[1], c[3], c[4], c[2], c[4], c[5];
        g.id = get<std::uint32_t>(in, "id");
        g.home_voxel = world_to_voxel(g.mean, voxel_size);
    }
    return out;
}

} // namespace splatfuse
