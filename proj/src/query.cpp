// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include "splatfuse/query.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>

#include <absl/container/flat_hash_map.h>
#include <absl/container/flat_hash_set.h>
#include <tbb/parallel_for.h>

#include "splatfuse/edit.hpp"

namespace splatfuse {

ThresholdWindow::ThresholdWindow(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (!(0.0 <= lo && lo < hi && hi <= 1.0)) {
        fail("threshold window must satisfy 0 <= lo < hi <= 1");
    }
}

ThresholdWindow ThresholdWindow::around(double center, double half_width) {
    return ThresholdWindow(std::max(0.0, center - half_width), std::min(1.0, center + half_width));
}

std::array<double, 5> sample_thresholds(const ThresholdWindow &window) {
    const double step = (window.hi - window.lo) / 4.0;
    return {window.lo, window.lo + step, window.lo + 2.0 * step, window.lo + 3.0 * step, window.hi};
}

double keyframe_score(double coverage, double distance, double eps) { return coverage / (distance + eps); }

double coverage(std::span<const Vec3> means, const Keyframe &keyframe) {
    if (means.empty()) {
        return 0.0;
    }
    const Pose world_to_camera = keyframe.camera_to_world.inverse();
    const auto &k = keyframe.intrinsics;
    std::size_t visible = 0;
    for (const Vec3 &m : means) {
        const Vec3 pc = world_to_camera * m;
        if (pc.z() <= 0.0) {
            continue;
        }
        const double u = k.fx * pc.x() / pc.z() + k.cx;
        const double v = k.fy * pc.y() / pc.z() + k.cy;
        if (u >= 0.0 && u < k.width && v >= 0.0 && v < k.height) {
            ++visible;
        }
    }
    return static_cast<double>(visible) / static_cast<double>(means.size());
}

std::vector<ScoredKeyframe> score_keyframes(const Cluster &cluster, const GaussianMap &map,
                                            std::span<const Keyframe> keyframes, int u, double eps) {
    if (u < 1) {
        fail("keyframes per cluster must be at least 1");
    }
    std::vector<Vec3> means;
    means.reserve(cluster.members.size());
    for (GaussianId id : cluster.members) {
        if (const auto *g = map.find(id)) {
            means.push_back(g->mean);
        }
    }
    std::vector<ScoredKeyframe> scored;
    for (const Keyframe &kf : keyframes) {
        ScoredKeyframe s;
        s.keyframe = &kf;
        s.coverage = coverage(means, kf);
        s.distance = (cluster.centroid - kf.camera_to_world.translation()).norm();
        s.score = keyframe_score(s.coverage, s.distance, eps);
        if (s.coverage > 0.0) {
            scored.push_back(s);
        }
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredKeyframe &a, const ScoredKeyframe &b) {
        return a.score != b.score ? a.score > b.score : a.keyframe->frame_id < b.keyframe->frame_id;
    });
    if (scored.size() > static_cast<std::size_t>(u)) {
        scored.resize(static_cast<std::size_t>(u));
    }
    return scored;
}

std::vector<GaussianId> select_in_region(const SparseVoxelGrid &grid, const SimilarityField &field,
                                         std::span<const VoxelKey> region, double threshold) {
    std::vector<VoxelKey> passing;
    for (const VoxelKey &key : region) {
        const auto sim = field.normalized(key);
        if (sim && *sim >= threshold) {
            passing.push_back(key);
        }
    }
    return primitives_in_voxels(grid, passing);
}

double lower_median(std::vector<double> values) {
    if (values.empty()) {
        fail("median of an empty set");
    }
    std::sort(values.begin(), values.end());
    return values[(values.size() - 1) / 2];
}

double evaluate_round(const SparseVoxelGrid &grid, const GaussianMap &map, const Cluster &cluster,
                      const SimilarityField &field, std::span<const double> thresholds,
                      std::span<const ScoredKeyframe> viewpoints, const ThresholdOracle &oracle,
                      std::string_view query_text, const QueryConfig &config, RoundRecord *record,
                      RenderSink *sink, std::size_t cluster_index, std::size_t round_index) {
    if (viewpoints.empty()) {
        fail("evaluate_round: no viewpoints");
    }
    if (thresholds.empty() || !std::is_sorted(thresholds.begin(), thresholds.end())) {
        fail("evaluate_round: thresholds must be non-empty and ascending");
    }
    std::vector<std::vector<GaussianId>> selections;
    selections.reserve(thresholds.size());
    for (double t : thresholds) {
        selections.push_back(select_in_region(grid, field, cluster.region, t));
    }

    std::vector<double> bests;
    std::string last_failure;
    for (const ScoredKeyframe &view : viewpoints) {
        const Keyframe &kf = *view.keyframe;
        const Pose world_to_camera = kf.camera_to_world.inverse();
        std::vector<RenderOutput> renders;
        renders.reserve(thresholds.size());
        for (std::size_t n = 0; n < thresholds.size(); ++n) {
            renders.push_back(render(selections[n], map, world_to_camera, kf.intrinsics, config.background));
            if (sink) {
                sink->on_render(cluster_index, round_index, kf.frame_id, n, thresholds[n], renders.back());
            }
        }
        std::vector<OracleCandidate> candidates;
        for (std::size_t n = 0; n < thresholds.size(); ++n) {
            candidates.push_back(OracleCandidate{thresholds[n], &renders[n]});
        }
        double best = std::numeric_limits<double>::quiet_NaN();
        try {
            const std::size_t index = oracle.best_index(query_text, kf.frame_id, candidates);
            if (index >= candidates.size()) {
                throw Error(ErrorKind::Oracle, "oracle returned out-of-range index");
            }
            best = thresholds[index];
            bests.push_back(best);
        } catch (const Error &e) {
            if (e.kind() != ErrorKind::Oracle) {
                throw;
            }
            last_failure = e.what();
        }
        if (record) {
            record->viewpoints.push_back(kf.frame_id);
            record->per_view_best.push_back(best);
        }
    }
    if (bests.empty()) {
        throw Error(ErrorKind::Oracle, "oracle failed on every viewpoint: " + last_failure);
    }
    const double chosen = lower_median(bests);
    if (record) {
        std::copy_n(thresholds.begin(), std::min<std::size_t>(5, thresholds.size()), record->thresholds.begin());
        record->chosen = chosen;
    }
    return chosen;
}

std::vector<GaussianId> QueryResult::all_selected() const {
    std::vector<GaussianId> ids;
    for (const auto &c : clusters) {
        ids.insert(ids.end(), c.selected.begin(), c.selected.end());
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

namespace {

std::vector<VoxelKey> grow_region(const GaussianMap &map, const SimilarityField &field,
                                  std::span<const GaussianId> members, double floor) {
    absl::flat_hash_set<VoxelKey> seen;
    std::deque<VoxelKey> frontier;
    std::vector<VoxelKey> region;
    for (GaussianId id : members) {
        const VoxelKey key = map.find(id)->home_voxel;
        if (seen.insert(key).second) {
            frontier.push_back(key);
            region.push_back(key);
        }
    }
    while (!frontier.empty()) {
        const VoxelKey key = frontier.front();
        frontier.pop_front();
        for (int dz = -1; dz <= 1; ++dz) {
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const VoxelKey next{key.i + dx, key.j + dy, key.k + dz};
                    if (seen.contains(next)) {
                        continue;
                    }
                    const auto sim = field.normalized(next);
                    if (sim && *sim >= floor) {
                        seen.insert(next);
                        frontier.push_back(next);
                        region.push_back(next);
                    }
                }
            }
        }
    }
    std::sort(region.begin(), region.end());
    return region;
}

ClusterResult finish_cluster(const GaussianMap &map, std::size_t id, Cluster cluster,
                             std::vector<GaussianId> selected, double threshold) {
    ClusterResult r;
    r.cluster_id = id;
    r.selected = std::move(selected);
    r.threshold = threshold;
    r.descriptor = object_descriptor(r.selected, map);
    r.cluster = std::move(cluster);
    return r;
}

} // namespace

std::vector<Cluster> seed_clusters(const SparseVoxelGrid &grid, const GaussianMap &map,
                                   const SimilarityField &field, double threshold, const QueryConfig &config) {
    const auto seeds = seed_selection(field, threshold);
    const auto ids = primitives_in_voxels(grid, seeds);
    if (ids.empty()) {
        throw Error(ErrorKind::NoMatch, "no match for query");
    }
    std::vector<Vec3> points;
    points.reserve(ids.size());
    for (GaussianId id : ids) {
        points.push_back(map.find(id)->mean);
    }
    const auto db = dbscan(points, config.dbscan_eps, config.dbscan_min_pts);
    std::vector<Cluster> clusters(static_cast<std::size_t>(db.cluster_count));
    for (std::size_t n = 0; n < ids.size(); ++n) {
        if (db.labels[n] != kNoise) {
            auto &c = clusters[static_cast<std::size_t>(db.labels[n])];
            c.members.push_back(ids[n]);
            c.centroid += points[n];
        }
    }
    if (clusters.empty()) {
        throw Error(ErrorKind::NoMatch, "no match for query (all seed Gaussians are noise)");
    }
    for (auto &c : clusters) {
        c.region = grow_region(map, field, c.members, std::min(config.region_floor, threshold));
    }

    // Clusters whose regions touch the same voxel describe one object; merge them, keeping
    // the order of each group's first cluster.
    std::vector<std::size_t> parent(clusters.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    const auto root = [&](std::size_t x) {
        while (parent[x] != x) {
            x = parent[x] = parent[parent[x]];
        }
        return x;
    };
    absl::flat_hash_map<VoxelKey, std::size_t> owner;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        for (const VoxelKey &key : clusters[c].region) {
            const auto [it, fresh] = owner.try_emplace(key, c);
            if (!fresh) {
                const std::size_t a = root(it->second);
                const std::size_t b = root(c);
                if (a != b) {
                    parent[std::max(a, b)] = std::min(a, b);
                }
            }
        }
    }
    std::vector<Cluster> merged;
    std::vector<std::size_t> slot(clusters.size(), clusters.size());
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        const std::size_t r = root(c);
        if (slot[r] == clusters.size()) {
            slot[r] = merged.size();
            merged.emplace_back();
        }
        Cluster &m = merged[slot[r]];
        m.members.insert(m.members.end(), clusters[c].members.begin(), clusters[c].members.end());
        m.region.insert(m.region.end(), clusters[c].region.begin(), clusters[c].region.end());
        m.centroid += clusters[c].centroid;
    }
    for (auto &m : merged) {
        std::sort(m.members.begin(), m.members.end());
        std::sort(m.region.begin(), m.region.end());
        m.region.erase(std::unique(m.region.begin(), m.region.end()), m.region.end());
        m.centroid /= static_cast<double>(m.members.size());
    }
    return merged;
}

QueryResult adaptive_query(const SparseVoxelGrid &grid, const GaussianMap &map,
                           std::span<const Keyframe> keyframes, std::span<const float> text_embedding,
                           std::string_view query_text, const ThresholdOracle &oracle,
                           const QueryConfig &config, RenderSink *sink) {
    if (map.size() == 0) {
        throw Error(ErrorKind::NoMatch, "no match for query (map has no primitives)");
    }
    if (config.rounds < 1) {
        fail("query rounds must be at least 1");
    }
    const SimilarityField field = similarity_field(grid, text_embedding);
    auto clusters = seed_clusters(grid, map, field, config.seed_threshold, config);
    const ThresholdWindow initial(config.window_lo, config.window_hi);

    std::vector<std::optional<ClusterResult>> results(clusters.size());
    std::vector<std::string> warnings(clusters.size());
    tbb::parallel_for(std::size_t{0}, clusters.size(), [&](std::size_t c) {
        Cluster &cluster = clusters[c];
        const auto views = score_keyframes(cluster, map, keyframes, config.keyframes_per_cluster,
                                           config.coverage_eps);
        if (views.empty()) {
            warnings[c] = "cluster " + std::to_string(c) + " dropped: not visible from any keyframe";
            return;
        }
        ThresholdWindow window = initial;
        std::vector<RoundRecord> rounds;
        double chosen = 0.0;
        for (int r = 0; r < config.rounds; ++r) {
            RoundRecord record;
            record.window = window;
            const auto thresholds = sample_thresholds(window);
            chosen = evaluate_round(grid, map, cluster, field, thresholds, views, oracle, query_text, config,
                                    &record, sink, c, static_cast<std::size_t>(r));
            rounds.push_back(std::move(record));
            window = ThresholdWindow::around(chosen, config.window_half_width);
        }
        auto selected = select_in_region(grid, field, cluster.region, chosen);
        if (selected.empty()) {
            warnings[c] = "cluster " + std::to_string(c) + " dropped: nothing passes the final threshold";
            return;
        }
        auto result = finish_cluster(map, c, std::move(cluster), std::move(selected), chosen);
        result.rounds = std::move(rounds);
        for (const auto &v : views) {
            result.viewpoints.push_back(v.keyframe->frame_id);
        }
        results[c] = std::move(result);
    });

    QueryResult out;
    out.query = std::string(query_text);
    out.strategy = "adaptive";
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        if (!warnings[c].empty()) {
            out.warnings.push_back(warnings[c]);
        }
        if (results[c]) {
            out.clusters.push_back(std::move(*results[c]));
        }
    }
    if (out.clusters.empty()) {
        throw Error(ErrorKind::NoMatch, "no match for query (every cluster was dropped)");
    }
    return out;
}

QueryResult fixed_query(const SparseVoxelGrid &grid, const GaussianMap &map,
                        std::span<const float> text_embedding, std::string_view query_text,
                        double threshold, const QueryConfig &config) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        fail("fixed threshold must lie in [0, 1]");
    }
    if (map.size() == 0) {
        throw Error(ErrorKind::NoMatch, "no match for query (map has no primitives)");
    }
    const SimilarityField field = similarity_field(grid, text_embedding);
    auto clusters = seed_clusters(grid, map, field, threshold, config);
    QueryResult out;
    out.query = std::string(query_text);
    out.strategy = "fixed";
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        auto members = clusters[c].members;
        std::sort(members.begin(), members.end());
        out.clusters.push_back(finish_cluster(map, c, std::move(clusters[c]), std::move(members), threshold));
    }
    return out;
}

} // namespace splatfuse
