// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "splatfuse/common.hpp"

namespace splatfuse {

inline constexpr int kNoise = -1;

struct DbscanResult {
    std::vector<int> labels; // cluster index per point, kNoise for noise
    int cluster_count = 0;
};

/// Density-based clustering. A point is core when at least `min_pts` points (itself
/// included) lie within distance `eps`. Clusters are numbered in order of their first
/// core point in the input, and each cluster is fully expanded before the next one starts,
/// so a border point reachable from several clusters joins the lowest-numbered one.
DbscanResult dbscan(std::span<const Vec3> points, double eps, int min_pts);

} // namespace splatfuse
