// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include "splatfuse/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace splatfuse {

SimilarityField::SimilarityField(std::vector<SimilarityEntry> entries, double min_raw, double max_raw)
    : entries_(std::move(entries)), min_raw_(min_raw), max_raw_(max_raw) {
    lookup_.reserve(entries_.size());
    for (std::size_t n = 0; n < entries_.size(); ++n) {
        lookup_.emplace(entries_[n].key, n);
    }
}

const SimilarityEntry *SimilarityField::find(const VoxelKey &key) const {
    const auto it = lookup_.find(key);
    return it == lookup_.end() ? nullptr : &entries_[it->second];
}

std::optional<double> SimilarityField::normalized(const VoxelKey &key) const {
    if (const auto *e = find(key)) {
        return e->normalized;
    }
    return std::nullopt;
}

SimilarityField similarity_field(const SparseVoxelGrid &grid, std::span<const float> text_embedding) {
    double norm2 = 0.0;
    for (float v : text_embedding) {
        norm2 += static_cast<double>(v) * v;
    }
    if (std::abs(std::sqrt(norm2) - 1.0) > 1e-6) {
        fail("query embedding must be unit length");
    }
    if (grid.feature_dim() != 0 && text_embedding.size() != grid.feature_dim()) {
        fail("query embedding has dimension " + std::to_string(text_embedding.size()) +
             ", map features have " + std::to_string(grid.feature_dim()));
    }

    std::vector<SimilarityEntry> entries;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (VoxelIndex idx = 0; idx < grid.size(); ++idx) {
        const Voxel &v = grid.voxel(idx);
        if (!(v.confidence > 0.0f)) {
            continue;
        }
        const auto f = grid.feature(idx);
        double dot = 0.0;
        double ff = 0.0;
        for (std::size_t d = 0; d < f.size(); ++d) {
            dot += static_cast<double>(f[d]) * text_embedding[d];
            ff += static_cast<double>(f[d]) * f[d];
        }
        // Opposing observations can cancel to a zero feature; treat it as orthogonal.
        const double raw = ff > 0.0 ? dot / std::sqrt(ff) : 0.0;
        entries.push_back(SimilarityEntry{v.key, idx, raw, 0.0});
        lo = std::min(lo, raw);
        hi = std::max(hi, raw);
    }
    if (entries.empty()) {
        throw Error(ErrorKind::NoMatch, "empty semantic map");
    }
    for (auto &e : entries) {
        e.normalized = hi > lo ? (e.raw - lo) / (hi - lo) : 0.5;
    }
    return SimilarityField(std::move(entries), lo, hi);
}

std::vector<VoxelKey> seed_selection(const SimilarityField &field, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        fail("seed threshold must lie in [0, 1]");
    }
    std::vector<VoxelKey> keys;
    for (const auto &e : field.entries()) {
        if (e.normalized >= threshold) {
            keys.push_back(e.key);
        }
    }
    return keys;
}

} // namespace splatfuse
