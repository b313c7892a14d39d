// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include "splatfuse/dbscan.hpp"

#include <deque>

#include <absl/container/flat_hash_map.h>

#include "splatfuse/sparse_grid.hpp"

namespace splatfuse {
namespace {

constexpr int kUnvisited = -2;

class RangeIndex {
public:
    RangeIndex(std::span<const Vec3> points, double eps) : points_(points), eps_(eps) {
        for (std::size_t n = 0; n < points.size(); ++n) {
            cells_[world_to_voxel(points[n], eps)].push_back(n);
        }
    }

    void query(std::size_t n, std::vector<std::size_t> &out) const {
        out.clear();
        const Vec3 &p = points_[n];
        const VoxelKey c = world_to_voxel(p, eps_);
        const double eps2 = eps_ * eps_;
        for (int dz = -1; dz <= 1; ++dz) {
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const auto it = cells_.find(VoxelKey{c.i + dx, c.j + dy, c.k + dz});
                    if (it == cells_.end()) {
                        continue;
                    }
                    for (std::size_t m : it->second) {
                        if ((points_[m] - p).squaredNorm() <= eps2) {
                            out.push_back(m);
                        }
                    }
                }
            }
        }
    }

private:
    std::span<const Vec3> points_;
    double eps_;
    absl::flat_hash_map<VoxelKey, std::vector<std::size_t>> cells_;
};

} // namespace

DbscanResult dbscan(std::span<const Vec3> points, double eps, int min_pts) {
    if (!(eps > 0.0)) {
        fail("dbscan: eps must be positive");
    }
    if (min_pts < 1) {
        fail("dbscan: min_pts must be at least 1");
    }
    DbscanResult result;
    result.labels.assign(points.size(), kUnvisited);
    const RangeIndex index(points, eps);
    std::vector<std::size_t> neighbors;
    std::deque<std::size_t> frontier;

    for (std::size_t n = 0; n < points.size(); ++n) {
        if (result.labels[n] != kUnvisited) {
            continue;
        }
        index.query(n, neighbors);
        if (neighbors.size() < static_cast<std::size_t>(min_pts)) {
            result.labels[n] = kNoise;
            continue;
        }
        const int cluster = result.cluster_count++;
        result.labels[n] = cluster;
        frontier.assign(neighbors.begin(), neighbors.end());
        while (!frontier.empty()) {
            const std::size_t m = frontier.front();
            frontier.pop_front();
            if (result.labels[m] == kNoise) {
                result.labels[m] = cluster; // border point
            }
            if (result.labels[m] != kUnvisited) {
                continue;
            }
            result.labels[m] = cluster;
            index.query(m, neighbors);
            if (neighbors.size() >= static_cast<std::size_t>(min_pts)) {
                frontier.insert(frontier.end(), neighbors.begin(), neighbors.end());
            }
        }
    }
    return result;
}

} // namespace splatfuse
