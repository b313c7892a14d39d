// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "splatfuse/sparse_grid.hpp"

namespace splatfuse {

struct SimilarityEntry {
    VoxelKey key;
    VoxelIndex voxel = 0;
    double raw = 0.0;        // cosine(feature, query)
    double normalized = 0.0; // min-max mapped to [0, 1]
};

/// Cosine similarity of every semantic voxel (confidence > 0) against one query,
/// min-max normalized over those voxels; a degenerate range maps everything to 0.5.
class SimilarityField {
public:
    SimilarityField() = default;
    SimilarityField(std::vector<SimilarityEntry> entries, double min_raw, double max_raw);

    const std::vector<SimilarityEntry> &entries() const { return entries_; }
    std::optional<double> normalized(const VoxelKey &key) const;
    const SimilarityEntry *find(const VoxelKey &key) const;
    double min_raw() const { return min_raw_; }
    double max_raw() const { return max_raw_; }
    std::size_t size() const { return entries_.size(); }

private:
    std::vector<SimilarityEntry> entries_;
    absl::flat_hash_map<VoxelKey, std::size_t> lookup_;
    double min_raw_ = 0.0;
    double max_raw_ = 0.0;
};

/// Throws ErrorKind::InvalidArgument for a non-unit query and ErrorKind::NoMatch
/// ("empty semantic map") when no voxel carries semantics.
SimilarityField similarity_field(const SparseVoxelGrid &grid, std::span<const float> text_embedding);

/// Keys with normalized similarity >= threshold, in field order.
std::vector<VoxelKey> seed_selection(const SimilarityField &field, double threshold);

} // namespace splatfuse
